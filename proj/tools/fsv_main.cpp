#include "fsv/cli/cli.hpp"

int main(int argc, char** argv) {
    fsv::cli::tune_allocator();
    return fsv::cli::cli_main(argc, argv);
}
