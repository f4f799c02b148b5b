#include <iostream>
#include <string>
#include <vector>

#include "pcforge/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return pcforge::cli::run(args, std::cout, std::cerr);
}
