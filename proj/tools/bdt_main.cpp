#include <iostream>
#include <string>
#include <vector>

#include "bdt/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return bdt::cli::run(args, std::cout, std::cerr);
}
