#include "scelab/cli.hpp"

int main(int argc, char** argv) { return scelab::run_cli(argc, argv); }
