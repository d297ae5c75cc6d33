#include <iostream>

#include "mmtod/cli.hpp"

int main(int argc, char** argv) { return mmtod::run_cli(argc, argv, std::cout, std::cerr); }
