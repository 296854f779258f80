#include <iostream>
#include <string>
#include <vector>

#include "qaft/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return qaft::run_cli(args, std::cout, std::cerr);
}
