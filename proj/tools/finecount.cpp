#include <iostream>
#include <string>
#include <vector>

#include "finecount/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return finecount::run_cli(args, std::cout, std::cerr).exit_code;
}
