#include "arcscore/cli.hpp"

int main(int argc, char** argv) { return arcscore::run_cli(argc, argv); }
