#include "damc/cli.hpp"

int main(int argc, char** argv) { return damc::cli::run(argc, argv); }
