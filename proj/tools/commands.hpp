#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

namespace mmfuse::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailed = 1;  // a check ran and did not pass
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

// Each command writes JSON to `out` and returns a process exit code.
// Errors propagate as mmfuse exceptions; the caller maps them to codes.
int cmd_gen_synth(const std::filesystem::path& config, std::ostream& out);
int cmd_train(const std::filesystem::path& config, std::ostream& out);
int cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest, std::ostream& out);
int cmd_grad_check(const std::string& module, bool negative_control, std::ostream& out);
int cmd_inspect_memory(const std::filesystem::path& checkpoint, std::ostream& out);

// Parses argv, dispatches and maps exceptions to exit codes: NumericError
// -> 3, any other mmfuse error or usage error -> 2.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mmfuse::cli
