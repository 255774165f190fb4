#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace clipse::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitEmpty = 2;

struct Io {
  std::istream& in;
  std::ostream& out;
  std::ostream& err;
  bool out_is_terminal = false;
  bool in_is_terminal = false;
};

// Subcommands: build, query, convert, serve, bench, shard-split.
// `args` excludes the program name.
int run(const std::vector<std::string>& args, Io io);

// Entry point bound to the process streams.
int run(int argc, char** argv);

}  // namespace clipse::cli
