// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace msecg {
namespace cli {

// Entry point for the msecg tool. Parses argv, resolves the run
// configuration (flags > MSECG_* environment > config file > profile
// defaults), dispatches the subcommand and returns the process exit code:
// 0 only when every requested artifact was written.
int run(int argc, char** argv);

}  // namespace cli
}  // namespace msecg
