#include "rotorlin/cli.hpp"

int main(int argc, char** argv) { return rotorlin::cli::run(argc, argv); }
