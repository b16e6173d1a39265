#include <string>
#include <vector>

#include "gsd/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return gsd::run_cli(args);
}
