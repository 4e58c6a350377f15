#include <iostream>
#include <string>
#include <vector>

#include "umff/cli.hpp"
#include "umff/diff/tensor.hpp"

int main(int argc, char** argv) {
  umff::diff::retain_freed_memory();
  const std::vector<std::string> args(argv + 1, argv + argc);
  return umff::cli::run(args, std::cout, std::cerr);
}
