#include "encaudit/pipeline.hpp"

int main(int argc, char** argv) { return encaudit::run_cli(argc, argv); }
