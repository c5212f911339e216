#include "specfuse/cli.hpp"

int main(int argc, char** argv) { return specfuse::cli_main(argc, argv); }
