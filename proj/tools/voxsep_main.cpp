#include <cstdio>
#include <exception>

#include "voxsep/cli/cli.h"
#include "voxsep/common.h"

int main(int argc, char** argv) {
  try {
    return voxsep::cli::run_main(argc, argv);
  } catch (const voxsep::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
