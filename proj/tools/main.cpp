#include <iostream>
#include <string>
#include <vector>

#include "stvnn/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return stvnn::run_cli(args, std::cout, std::cerr);
}
