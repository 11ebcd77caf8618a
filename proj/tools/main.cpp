#include "cli_app.hpp"

int main(int argc, char** argv) { return mixent::cli::run(argc, argv); }
