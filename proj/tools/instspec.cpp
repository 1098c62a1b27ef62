#include "instspec/cli.hpp"

int main(int argc, char** argv) { return instspec::run_cli(argc, argv); }
