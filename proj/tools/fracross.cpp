#include <fracross/cli.hpp>

int main(int argc, char** argv) { return fracross::cli_main(argc, argv); }
