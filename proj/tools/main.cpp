#include <iostream>

#include "lobhawkes/cli.hpp"

int main(int argc, char** argv) { return lobhawkes::run_cli(argc, argv, std::cout, std::cerr); }
