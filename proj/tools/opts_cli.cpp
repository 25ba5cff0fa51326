#include "opts/cli.hpp"

int main(int argc, char** argv) {
    opts::cli::CommandEnv env;
    return opts::cli::run_cli(argc, argv, env);
}
