#pragma once

#include <stdexcept>
#include <string>

namespace xva {

/// Operand shapes or layer geometry do not fit together.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An operation was called out of order or with an unusable input set
/// (empty batch, backward before forward, unknown class index, ...).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A model or generator configuration is internally inconsistent.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// File-level failure: missing files, malformed headers, CRC mismatch.
/// The message always names the offending path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A metric is mathematically undefined for the given predictions
/// (e.g. ROC AUC with a single class present).
class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace xva
