#include <iostream>

#include "flightfix/cli.hpp"

int main(int argc, char** argv) { return flightfix::cli::main(argc, argv, std::cout, std::cerr); }
