#include <iostream>

#include "tscert/cli/commands.hpp"

int main(int argc, char** argv) { return tscert::cli::run(argc, argv, std::cout, std::cerr); }
