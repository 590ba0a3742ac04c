#include "cli_app.hpp"

int main(int argc, char** argv) { return penpath::cli::run(argc, argv); }
