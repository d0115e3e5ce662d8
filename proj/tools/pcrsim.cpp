#include <iostream>

#include "pcrsim/cli.hpp"

int main(int argc, char** argv) { return pcrsim::cli::run(argc, argv, std::cout, std::cerr); }
