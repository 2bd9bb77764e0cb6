#include <iostream>

#include "weakpark/cli.hpp"

int main(int argc, char** argv) { return weakpark::run_cli(argc, argv, std::cout, std::cerr); }
