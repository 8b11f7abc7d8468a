#include <iostream>

#include "cap/cli.hpp"

int main(int argc, char** argv) {
  return cap::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
