#include <iostream>

#include "lemon/cli/cli.hpp"

int main(int argc, char** argv) { return lemon::cli::run(argc, argv, std::cout, std::cerr); }
