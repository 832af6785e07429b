#include <iostream>

#include "srda/cli.hpp"

int main(int argc, char** argv) { return srda::run_cli(argc, argv, std::cout, std::cerr); }
