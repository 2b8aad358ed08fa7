#include <vector>

#include "fairgrain/pipeline.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return fairgrain::run_cli(args);
}
