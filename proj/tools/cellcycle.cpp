#include <cellcycle/cli.hpp>

int main(int argc, char** argv) { return cellcycle::cli::run(argc, argv); }
