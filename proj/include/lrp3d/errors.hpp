#ifndef LRP3D_ERRORS_HPP
#define LRP3D_ERRORS_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lrp3d {

/// Shape or axis mismatch between operands.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid model configuration (depth, shapes, filter ranges...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Value outside the domain an operation accepts (e.g. unnormalized filter input).
class RangeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or truncated file. Carries the byte offset where decoding stopped.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Weights file does not fit the network it is loaded into.
class WiringError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Activation cache does not belong to the network it is used with.
class CacheError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// NaN/Inf escaped a kernel, or training diverged.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lrp3d

#endif  // LRP3D_ERRORS_HPP
