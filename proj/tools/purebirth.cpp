#include "purebirth/cli.hpp"

int main(int argc, char** argv) { return purebirth::cli::main(argc, argv); }
