#include <iostream>

#include "plmm/cli/commands.hpp"

int main(int argc, char **argv) { return plmm::cli::run_cli(argc, argv, std::cout, std::cerr); }
