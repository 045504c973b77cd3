#include "ocon/cli.hpp"

int main(int argc, char** argv) { return ocon::cli::run(argc, argv); }
