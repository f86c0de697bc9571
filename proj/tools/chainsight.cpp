#include <chainsight/cli.hpp>

int main(int argc, char** argv) { return chainsight::cli::dispatch(argc, argv); }
