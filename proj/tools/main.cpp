#include <iostream>

#include "ultra/cli.hpp"

int main(int argc, char** argv) { return ultra::run_cli(argc, argv, std::cout, std::cerr); }
