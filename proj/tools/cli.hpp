#pragma once

#include <iosfwd>

namespace gaitcast::cli {

// Runs one gaitcast command. Returns the process exit code: 0 on success,
// 1 when check-grad exceeds its tolerance, 2 on any error. Errors are
// reported on `err` as a single line `error: <category>: <message>`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gaitcast::cli
