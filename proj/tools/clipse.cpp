#include "clipse/cli.hpp"

int main(int argc, char** argv) { return clipse::cli::run(argc, argv); }
