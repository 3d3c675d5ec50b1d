#include "fashionfb/cli.hpp"

int main(int argc, char** argv) { return fashionfb::run_cli(argc, argv); }
