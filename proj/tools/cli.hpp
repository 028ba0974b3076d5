#pragma once

// hide-kit command line: subcommands score, baselines, detect, calibrate,
// evaluate, synth, inspect.
//
// Exit codes: 0 success, 1 validation / configuration / usage error,
// 2 I/O or container-format error.

namespace hide::cli {

inline constexpr const char* kConfigEnv = "HIDE_KIT_CONFIG";

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;

int run(int argc, const char* const* argv);

}  // namespace hide::cli
