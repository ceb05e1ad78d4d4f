#include "ktsnn/cli.hpp"

int main(int argc, char** argv) { return ktsnn::cli::run(argc, argv); }
