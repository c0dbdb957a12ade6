#include "cohpaint/cli.hpp"

int main(int argc, char** argv) { return cohpaint::run_cli(argc, argv); }
