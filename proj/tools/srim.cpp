#include <iostream>
#include <string>
#include <vector>

#include "srim/commands.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return srim::run_cli(args, std::cout, std::cerr);
}
