#include "rainsense/cli.hpp"

int main(int argc, char** argv) {
  return rainsense::run(std::vector<std::string>(argv + 1, argv + argc));
}
