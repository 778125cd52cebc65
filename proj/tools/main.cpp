#include "artgest/cli/commands.hpp"

int main(int argc, char** argv) { return artgest::cli::run(argc, argv); }
