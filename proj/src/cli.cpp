#include "kgje/cli.hpp"

namespace kgje {

int cli_main(int, char**) { return 2; }  // replaced when subcommands land

}  // namespace kgje
