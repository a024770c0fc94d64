#pragma once

// Command-line front end: gen-data, train, separate, evaluate, gradcheck.
// run_main throws ConfigError for usage and configuration problems and other
// std::exceptions for runtime failures; main() maps those to exit codes 1
// and 2. Argument parse errors are handled internally (help prints and exits
// 0, anything else 1).

namespace voxsep::cli {

int run_main(int argc, char** argv);

}  // namespace voxsep::cli
