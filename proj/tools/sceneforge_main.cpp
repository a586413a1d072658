#include <iostream>
#include <string>
#include <vector>

#include "sceneforge/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return sceneforge::run_cli(args, std::cout, std::cerr);
}
