#include <iostream>
#include <string>
#include <vector>

#include "adlift/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return adlift::cli::dispatch(args, std::cout, std::cerr);
}
