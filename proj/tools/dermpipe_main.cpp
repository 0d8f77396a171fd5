#include "dermpipe/cli.hpp"

int main(int argc, char** argv) {
  return dermpipe::run_subcommand(std::vector<std::string>(argv + 1, argv + argc));
}
