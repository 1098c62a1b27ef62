#pragma once

namespace instspec {

// Entry point behind the instspec binary. Exit codes: 0 success, 2 usage
// error, 3 input/validation error, 4 transport error, 5 partial build.
int run_cli(int argc, const char* const* argv);

}  // namespace instspec
