#pragma once

namespace arcscore {

// Exit codes: 0 ok, 1 usage or configuration error, 2 runtime error.
int run_cli(int argc, char** argv);

}  // namespace arcscore
