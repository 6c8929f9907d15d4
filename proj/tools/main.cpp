#include "mahavar_cli.hpp"

int main(int argc, char** argv) { return mahavar::cli::run(argc, argv); }
