#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "srl/data.hpp"

namespace srl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;    // bad flags or configuration
inline constexpr int kExitRuntime = 2;  // missing files, bad data, failed checks

/// Runs one command line (without the program name). Diagnostics go to
/// `err`, machine-readable output such as metrics CSV to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Corpus directory written by gen-data: manifest.tsv plus four WAVs per
/// example (clean, reference, interference, noisy).
void write_corpus(const std::filesystem::path& dir, const Dataset& ds);
std::vector<TrainingExample> read_corpus(const std::filesystem::path& dir,
                                         std::optional<Split> split, double sample_rate);

}  // namespace srl::cli
