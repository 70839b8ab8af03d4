#include "fairbf/cli.hpp"

int main(int argc, char** argv) { return fairbf::cli::run_cli(argc, argv); }
