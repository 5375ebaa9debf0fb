#include <string>
#include <vector>

#include "pty/cli.hpp"

int main(int argc, char** argv) {
  return pty::cli::run(std::vector<std::string>(argv, argv + argc));
}
