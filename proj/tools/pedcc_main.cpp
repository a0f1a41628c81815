#include <iostream>

#include "pedcc/cli.hpp"

int main(int argc, char** argv) { return pedcc::cli::run(argc, argv, std::cout, std::cerr); }
