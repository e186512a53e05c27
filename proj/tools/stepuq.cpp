#include <string>
#include <vector>

#include "stepuq/cli.hpp"

int main(int argc, char** argv) {
  return stepuq::cli::run(std::vector<std::string>(argv, argv + argc));
}
