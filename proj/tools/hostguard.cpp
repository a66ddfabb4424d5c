#include <iostream>

#include "hostguard/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return hostguard::run_cli(args, std::cout, std::cerr, std::cin, hostguard::process_env());
}
