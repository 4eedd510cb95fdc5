#include "app.hpp"

int main(int argc, char** argv) { return onepflow::cli::main_entry(argc, argv); }
