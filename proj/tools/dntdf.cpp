#include <iostream>
#include <string>
#include <vector>

#include "dntdf/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dntdf::run_cli(args, std::cout, std::cerr);
}
