#include "cli.hpp"

#include "saol/allocator.hpp"

#include <iostream>

int main(int argc, char **argv) {
  saol::tune_allocator();
  return saol::run_cli(argc, argv, std::cout, std::cerr);
}
