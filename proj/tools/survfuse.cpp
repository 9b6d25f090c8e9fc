#include <survfuse/cli.hpp>

int main(int argc, char** argv) { return survfuse::run_cli(argc, argv); }
