#include <iostream>

#include "radlab/cli.hpp"

int main(int argc, char** argv) { return radlab::cli_main(argc, argv, std::cout, std::cerr); }
