#pragma once

namespace otreg {

// Entry point behind the otreg binary; exposed so tests can drive commands
// in-process. Exit codes: 0 success, 1 failed gradient check, 2 file/format/
// usage errors, 3 numerical failures.
int run_cli(int argc, const char* const* argv);

}  // namespace otreg
