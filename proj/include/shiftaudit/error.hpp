#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace shiftaudit {

/// Input data violates a format or content rule (malformed files, unknown ids,
/// labels outside the schema, single-class training sets).
///
/// Caller mistakes on parameters (bad dimensions, B < 2, perplexity too large)
/// are reported as std::invalid_argument instead.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when a relabel or lookup names ids the dataset does not contain.
class UnknownIdError : public DataError {
 public:
  UnknownIdError(const std::string& what, std::vector<std::string> ids)
      : DataError(what), ids_(std::move(ids)) {}

  const std::vector<std::string>& ids() const noexcept { return ids_; }

 private:
  std::vector<std::string> ids_;
};

}  // namespace shiftaudit
