#include <iostream>
#include <string>
#include <vector>

#include "nrc/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return nrc::run_cli(args, std::cout, std::cerr);
}
