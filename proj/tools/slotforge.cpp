#include <iostream>

#include "slotforge/cli.hpp"

int main(int argc, char** argv) { return slotforge::run_cli(argc, argv, std::cout, std::cerr); }
