#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mtec {

// Error categories aligned with the CLI exit codes:
// ConfigError -> 1, DataError -> 2, NumericalError -> 3.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kToolVersion = "mtec 1.0.0";

std::uint64_t fnv1a64(std::string_view s);
std::string hex64(std::uint64_t v);

// Writes to <path>.tmp and renames, so a crashed stage never leaves a
// partially written artifact under the final name.
void write_file_atomic(const std::string& path, const std::string& contents);

std::string read_file(const std::string& path);  // throws DataError if missing

std::string format_double(double v);  // shortest round-trip representation

}  // namespace mtec
