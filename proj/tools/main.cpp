#include "introdistill/cli.hpp"

int main(int argc, char** argv) { return introdistill::cli_main(argc, argv); }
