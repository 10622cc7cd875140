#include <iostream>

#include "zoneprior/cli.hpp"

int main(int argc, char** argv) { return zoneprior::run_cli(argc, argv, std::cout, std::cerr); }
