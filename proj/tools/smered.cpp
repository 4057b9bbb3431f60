#include <iostream>
#include <string>
#include <vector>

#include "smered/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return smered::run_cli(args, std::cout, std::cerr);
}
