#include "wvcd/cli.hpp"

int main(int argc, char** argv) { return wvcd::cli::run_main(argc, argv); }
