#include "pintent/cli.hpp"

int main(int argc, char** argv) { return pintent::run_cli(argc, argv); }
