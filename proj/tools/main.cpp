#include <iostream>
#include <string>
#include <vector>

#include "lmdvit/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return lmdvit::run_cli(args, std::cout, std::cerr);
}
