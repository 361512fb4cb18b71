#include <iostream>
#include <string>
#include <vector>

#include "hgr/workbench.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return hgr::run_cli(args, std::cout, std::cerr);
}
