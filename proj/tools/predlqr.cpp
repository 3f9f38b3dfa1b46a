#include <iostream>

#include "predlqr/cli.hpp"

int main(int argc, char** argv) { return predlqr::cli::run(argc, argv, std::cout, std::cerr); }
