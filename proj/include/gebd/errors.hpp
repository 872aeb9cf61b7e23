#pragma once

#include <stdexcept>
#include <string>

namespace gebd {

// Error families. The CLI maps them onto exit codes: ConfigError -> 2,
// FormatError/InputError -> 3, TrainingError -> 4.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File-level problems (bad magic, truncation, non-finite payload). Messages
// carry the byte offset where the problem was detected.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace gebd
