#include <iostream>

#include "histmod/cli.hpp"

int main(int argc, char** argv) { return histmod::cli::run(argc, argv, std::cout, std::cerr); }
