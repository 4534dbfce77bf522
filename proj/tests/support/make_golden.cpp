// Regenerates the golden LOBSTER fixture.
//
//   make_golden <dir>

#include <exception>
#include <iostream>

#include "synthetic_lobster.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_golden <dir>\n";
    return 2;
  }
  try {
    lobhawkes::testing::write_golden(argv[1]);
  } catch (const std::exception& e) {
    std::cerr << "make_golden: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
