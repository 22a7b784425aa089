#include "semdec/cli.hpp"

int main(int argc, char** argv) { return semdec::cli::run(argc, argv); }
