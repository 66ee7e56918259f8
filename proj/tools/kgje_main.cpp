#include "kgje/cli.hpp"

int main(int argc, char** argv) { return kgje::cli_main(argc, argv); }
