#include <string>
#include <vector>

#include "suplid/cli.hpp"

int main(int argc, char** argv) {
    return suplid::cli::run(std::vector<std::string>(argv, argv + argc));
}
