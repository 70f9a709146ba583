#pragma once

namespace voxmem {

// Entry point shared by the binary and the tests; returns the process exit
// code (0 ok, 1 usage/config, 2 I/O, 3 numeric/contract).
int run_cli(int argc, const char* const* argv);

}  // namespace voxmem
