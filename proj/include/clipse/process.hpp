#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace clipse::proc {

struct Outcome {
  int exit_code = -1;  // negative signal number when killed by a signal
  std::string out;
  std::string err;
};

// Runs argv[0] (searched in PATH when it has no '/') with the given stdin
// text and waits for it. Throws IoError if the process cannot be started.
Outcome run(const std::vector<std::string>& argv, const std::string& input = {},
            bool capture_output = true);

// Absolute path of the running executable.
std::filesystem::path self_executable();

}  // namespace clipse::proc
