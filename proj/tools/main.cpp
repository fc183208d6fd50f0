#include <iostream>
#include <string>
#include <vector>

#include "fixloc/cli.hpp"

int main(int argc, char** argv) {
  return fixloc::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
