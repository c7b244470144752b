#include <iostream>
#include <string>
#include <vector>

#include "expforce/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return expforce::run_cli(args, std::cout, std::cerr);
}
