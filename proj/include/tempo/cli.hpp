#pragma once

namespace tempo::cli {

/// Entry point shared by the binary and the tests.
/// Exit codes: 0 success, 2 usage error, 3 input/data error, 4 numerical abort.
int run(int argc, const char* const* argv);

} // namespace tempo::cli
