#include <iostream>

#include "aiive/cli.hpp"

int main(int argc, char** argv)
{
    aiive::cli::configure_logging();
    return aiive::cli::run({argv + 1, argv + argc}, std::cout, std::cerr);
}
