#include <iostream>
#include <string>
#include <vector>

#include "s3e/cli.hpp"

int main(int argc, char** argv) {
  std::ios::sync_with_stdio(false);
  std::vector<std::string> args(argv, argv + argc);
  return s3e::cli::main(args, std::cin, std::cout, std::cerr);
}
