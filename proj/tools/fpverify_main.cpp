#include "fpv/workbench.hpp"

int main(int argc, char** argv) { return fpv::workbench::run_cli(argc, argv); }
