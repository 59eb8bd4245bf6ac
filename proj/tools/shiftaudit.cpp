#include "shiftaudit/cli.hpp"

int main(int argc, char** argv) { return shiftaudit::run_cli(argc, argv); }
