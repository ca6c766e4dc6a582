#include "cli.hpp"

int main(int argc, char** argv) { return timedistill::cli::run(argc, argv); }
