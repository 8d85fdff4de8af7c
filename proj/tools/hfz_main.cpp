#include "hfz/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return hfz::cli_main(argc, argv, std::cout, std::cerr); }
