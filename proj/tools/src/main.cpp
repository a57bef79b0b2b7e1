#include <iostream>

#include "partdisent/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return partdisent::cli::run(args, std::cout, std::cerr);
}
