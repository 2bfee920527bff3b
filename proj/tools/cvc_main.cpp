#include "cvc/cli/app.hpp"

int main(int argc, char** argv) { return cvc::cli::run(argc, argv); }
