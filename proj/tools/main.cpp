#include <iostream>

#include "dementia_r1/cli.hpp"

int main(int argc, char** argv) { return dr1::run_cli(argc, argv, std::cout, std::cerr); }
