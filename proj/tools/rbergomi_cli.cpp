#include "cli_commands.hpp"

int main(int argc, char** argv) { return rbergomi::cli::run(argc, argv); }
