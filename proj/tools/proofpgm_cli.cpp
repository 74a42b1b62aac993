#include "proofpgm/cli.hpp"

int main(int argc, char** argv) { return proofpgm::cli::run(argc, argv); }
