#pragma once

namespace affdec {

// Entry point of the affdec binary. Returns the process exit status:
// 0 on success, 1 on an operational failure, 2 on a usage error.
int dispatch(int argc, char** argv);

}  // namespace affdec
