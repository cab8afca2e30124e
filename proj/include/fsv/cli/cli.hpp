#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fsv::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

/// Keeps large tensor buffers on the heap instead of fresh mmap pages.
/// Training allocates and frees the same big buffers every episode. No-op
/// outside glibc.
void tune_allocator();

/// Runs one command line; args[0] is the program name.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_main(int argc, char** argv);

}  // namespace fsv::cli
