#include "oppshuffle/cli.hpp"

int main(int argc, char** argv) { return oppshuffle::cli::run(argc, argv); }
