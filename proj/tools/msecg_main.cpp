// SPDX-License-Identifier: Apache-2.0
#include <msecg/cli.hpp>

int main(int argc, char** argv) { return msecg::cli::run(argc, argv); }
