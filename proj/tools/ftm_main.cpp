#include <string>
#include <vector>

#include "ftm/cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ftm::cli::run_cli(args);
}
