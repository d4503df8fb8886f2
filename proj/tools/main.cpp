#include "soh/cli.hpp"

int main(int argc, char** argv) { return soh::cli::run(argc, argv); }
