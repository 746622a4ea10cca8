#include "ironloss/harness.hpp"

int main(int argc, char** argv) { return ironloss::cli_main(argc, argv); }
