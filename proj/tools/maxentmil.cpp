#include "maxentmil/commands.hpp"

int main(int argc, char** argv) { return maxentmil::run_cli(argc, argv); }
