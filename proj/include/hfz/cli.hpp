#pragma once

#include <iosfwd>

namespace hfz {

/// Entry point of the `hfz` tool. Subcommands: gen, convert, train, eval,
/// experiment, fuse. Returns 0 on success, 2 on invalid usage or
/// configuration, 1 on runtime failure.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hfz
