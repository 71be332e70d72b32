#include "restora/cli.hpp"

int main(int argc, char** argv) { return restora::cli::run(argc, argv); }
