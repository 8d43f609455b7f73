#include "seqtag/cli.hpp"

int main(int argc, char** argv) { return seqtag::cli::cli_main(argc, argv); }
