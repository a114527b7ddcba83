#include <iostream>

#include "viewbench/cli.hpp"

int main(int argc, char** argv) { return viewbench::run_cli(argc, argv, std::cout, std::cerr); }
