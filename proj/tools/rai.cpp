#include "rai/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return rai::cli::run(argc, argv, std::cout, std::cerr); }
