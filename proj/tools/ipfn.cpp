#include <string>
#include <vector>

#include "ipfn/cli.hpp"

int main(int argc, char** argv) {
    return ipfn::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
