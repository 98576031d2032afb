#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "radlab/matrix.hpp"

namespace radlab {

/// Malformed container; the message starts with "byte <offset>:".
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t offset, const std::string& what)
      : std::runtime_error("byte " + std::to_string(offset) + ": " + what), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

struct NamedTensor {
  std::string name;
  Matrix value;
};

/// Layout:
///
///   radlab-weights v1\n
///   tensors <count>\n
///   <name> <rows> <cols>\n      (count lines)
///   end\n
///   <little-endian float64, row-major, tensors in header order>
std::string encode_weights(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_weights(const std::string& bytes);

void save_weights(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_weights(const std::string& path);

/// Looks a tensor up by name; throws ParseError (offset 0) when missing.
const Matrix& tensor_named(const std::vector<NamedTensor>& tensors, const std::string& name);

}  // namespace radlab
