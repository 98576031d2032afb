#pragma once

#include <iosfwd>

namespace radlab {

/// Subcommands: pretrain, finetune, radreg, experiment, bounds, verify,
/// gen-data. Returns 0 on success, 1 on invalid input (bad flag, config or
/// value), 2 on numerical or file-format failures.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace radlab
