#include "rfconc/cli.hpp"

int main(int argc, char** argv) { return rfconc::cli::run(argc, argv); }
