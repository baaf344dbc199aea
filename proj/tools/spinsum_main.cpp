#include "spinsum/pipeline.hpp"

int main(int argc, char** argv) { return spinsum::run_cli(argc, argv); }
