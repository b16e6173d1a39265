#pragma once

#include <string>
#include <vector>

namespace gsd {

// Entry point of the gsd tool:
//   gsd <generate|train|eval|analyze|sweep> --config PATH [--out DIR]
//       [--ckpt PATH] [--data PATH] [--axis NAME --values CSV]
// Exit codes: 0 success, 1 usage error, 2 I/O or config error, 3 numerical
// failure. GSD_SEED overrides train.seed.
int run_cli(const std::vector<std::string>& args);

}  // namespace gsd
