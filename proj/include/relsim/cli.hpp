#pragma once

// Command-line front end: subcommands dta, read, abft, inject, gen-workload.
//
// Each subcommand reads an optional strict JSON config (--config), writes its
// outputs atomically under --out, and records the fully resolved config as
// run.json, which can be fed back with --config to repeat the run. Failures
// are reported on stderr as one JSON object and a nonzero exit code:
// 2 usage or config, 3 file I/O, 4 unrecoverable fault, 1 anything else.

#include <ostream>

namespace relsim::cli {

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace relsim::cli
