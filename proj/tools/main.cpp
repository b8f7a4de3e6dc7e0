#include <iostream>

#include "lrp3d/cli.hpp"

int main(int argc, char** argv) { return lrp3d::run_cli(argc, argv, std::cout, std::cerr); }
