#include "prnmt/config.hpp"

int main(int argc, char** argv) { return prnmt::run_cli(argc, argv); }
