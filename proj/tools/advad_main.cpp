#include <iostream>
#include <string>
#include <vector>

#include "advad/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return advad::run_cli(args, std::cout, std::cerr);
}
