#include "otreg/cli.hpp"

int main(int argc, char** argv) { return otreg::run_cli(argc, argv); }
