#include "gridcascade/cli.hpp"

int main(int argc, char** argv) { return gridcascade::run_cli(argc, argv); }
