#include <iostream>
#include <string>
#include <vector>

#include "ratfm/cli.hpp"
#include "ratfm/runtime.hpp"

int main(int argc, char** argv) {
  ratfm::tune_allocator();
  return ratfm::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
