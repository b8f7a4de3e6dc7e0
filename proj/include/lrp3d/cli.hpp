#ifndef LRP3D_CLI_HPP
#define LRP3D_CLI_HPP

#include <iosfwd>

namespace lrp3d {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Entry point of the lrp3d command-line tool. Subcommands: gen-data, train,
/// predict, explain, metrics, sweep, calculus. Returns 0 on success, 1 on a
/// usage error (usage text goes to `err`), 2 on a data, format or numeric error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lrp3d

#endif  // LRP3D_CLI_HPP
