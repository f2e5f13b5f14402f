#include "promptopt/cli.hpp"

int main(int argc, char** argv) { return popt::cli_main(argc, argv); }
