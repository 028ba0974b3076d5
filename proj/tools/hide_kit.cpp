#include "cli.hpp"

int main(int argc, char** argv) { return hide::cli::run(argc, argv); }
