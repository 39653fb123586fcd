#include <iostream>

#include "spinmem/cli.hpp"

int main(int argc, char** argv) { return spinmem::run_cli(argc, argv, std::cout, std::cerr); }
