#include "thintube/cli.hpp"

int main(int argc, char** argv) { return thintube::cli_main(argc, argv); }
