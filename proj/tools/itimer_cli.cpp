#include <iostream>
#include <string>
#include <vector>

#include "itimer/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return itimer::cli::run(args, std::cout, std::cerr);
}
