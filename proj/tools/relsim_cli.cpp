#include <iostream>

#include "relsim/cli.hpp"

int main(int argc, char** argv) { return relsim::cli::run(argc, argv, std::cout, std::cerr); }
