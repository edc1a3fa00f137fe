#include <string>
#include <vector>

#include "insgen/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return insgen::run_cli(std::move(args));
}
