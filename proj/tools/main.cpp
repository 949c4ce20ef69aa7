#include "cli.hpp"

int main(int argc, char** argv) { return interformer::cli::run(argc, argv); }
