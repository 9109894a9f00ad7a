#include <iostream>

#include "nashpar/errors.hpp"
#include "nashpar/run.hpp"

int main(int argc, char** argv) {
    using namespace nashpar;
    if (argc < 2) {
        std::cerr << cli_usage();
        return 2;
    }
    try {
        const CliOptions opt = parse_cli(argc - 1, argv + 1);
        return run_cli(opt, std::cout, std::cerr);
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 2;
    }
}
