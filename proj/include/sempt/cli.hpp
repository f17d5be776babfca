#pragma once

namespace sempt::cli {

// Entry point behind the sempt binary; exposed for in-process testing.
// Returns 0 on success, 1 on usage errors, 2 on runtime failures.
int run(int argc, const char* const* argv);

}  // namespace sempt::cli
