#include <iostream>
#include <string>
#include <vector>

#include "assign_surrogate/cli.hpp"

int main(int argc, char** argv) {
    return surrogate::run_command(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
