#include "pcc/cli.hpp"

int main(int argc, char** argv) { return pcc::cli_dispatch(argc, argv); }
