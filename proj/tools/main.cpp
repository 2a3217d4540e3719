#include "commands.hpp"

int main(int argc, char** argv) { return vrf::cli::run_cli(argc, argv); }
