#include <iostream>

#include "clusterscope/cli.hpp"

int main(int argc, char** argv) { return clusterscope::run_cli(argc, argv, std::cout, std::cerr); }
