#include <bc1/cli.hpp>

int main(int argc, char** argv) {
  return bc1::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
