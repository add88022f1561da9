#include "mesr/commands.hpp"

#include <iostream>

int main(int argc, char** argv) { return mesr::run_cli(argc, argv, std::cout, std::cerr); }
