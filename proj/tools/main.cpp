// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "segattn/cli.hpp"

int main(int argc, char** argv) { return segattn::run_cli(argc, argv, std::cout, std::cerr); }
