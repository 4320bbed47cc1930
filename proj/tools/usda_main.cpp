#include "usda/cli.hpp"

int main(int argc, char** argv) { return usda::cli::dispatch(argc, argv); }
