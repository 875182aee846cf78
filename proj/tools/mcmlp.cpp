#include "mcmlp/cli.hpp"

int main(int argc, char** argv) { return mcmlp::cli_main(argc, argv); }
