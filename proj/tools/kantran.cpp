#include <kantran/cli.hpp>

int main(int argc, char** argv) { return kantran::cli::run(argc, argv); }
