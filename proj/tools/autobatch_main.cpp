#include <iostream>

#include "autobatch/cli.hpp"

int main(int argc, char** argv) {
  return autobatch::cli_main(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
