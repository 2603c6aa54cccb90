#include <iostream>

#include "cml/cli.hpp"

int main(int argc, char** argv) { return cml::run_cli(argc, argv, std::cout, std::cerr); }
