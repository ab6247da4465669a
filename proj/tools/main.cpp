#include "lll/cli/commands.hpp"

int main(int argc, char** argv) { return lll::cli::run_cli(argc, argv); }
