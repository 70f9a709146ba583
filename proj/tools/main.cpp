#include "voxmem/cli.hpp"

int main(int argc, char** argv) { return voxmem::run_cli(argc, argv); }
