#include <iostream>
#include <string>
#include <vector>

#include "sthc/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return sthc::cli::run(args, std::cout, std::cerr);
}
