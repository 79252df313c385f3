#include "coagfrag/cli.hpp"

int main(int argc, char** argv) { return coagfrag::cli::main(argc, argv); }
