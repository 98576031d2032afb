#include "radlab/weights.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace radlab {

namespace {

constexpr std::string_view kMagic = "radlab-weights v1";

void put_le(std::string& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFU));
}

double get_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | static_cast<unsigned char>(p[i]);
  return std::bit_cast<double>(bits);
}

bool valid_tensor_name(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (c <= ' ' || c == 0x7f) return false;
  return true;
}

class HeaderReader {
 public:
  explicit HeaderReader(const std::string& bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }

  std::string_view line() {
    const auto nl = bytes_.find('\n', pos_);
    if (nl == std::string::npos) throw ParseError(pos_, "unterminated header line");
    std::string_view l(bytes_.data() + pos_, nl - pos_);
    line_start_ = pos_;
    pos_ = nl + 1;
    return l;
  }

  std::size_t line_start() const { return line_start_; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
  std::size_t line_start_ = 0;
};

std::size_t parse_count(std::string_view s, std::size_t at, const char* what) {
  std::size_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || s.empty()) {
    throw ParseError(at, std::string("bad ") + what + " '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

std::string encode_weights(const std::vector<NamedTensor>& tensors) {
  std::string out(kMagic);
  out += "\ntensors " + std::to_string(tensors.size()) + "\n";
  for (const auto& t : tensors) {
    if (!valid_tensor_name(t.name)) throw ValidationError("encode_weights: bad tensor name '" + t.name + "'");
    out += t.name + " " + std::to_string(t.value.rows()) + " " + std::to_string(t.value.cols()) + "\n";
  }
  out += "end\n";
  for (const auto& t : tensors)
    for (double v : t.value.data()) put_le(out, v);
  return out;
}

std::vector<NamedTensor> decode_weights(const std::string& bytes) {
  HeaderReader r(bytes);
  if (r.line() != kMagic) throw ParseError(0, "not a radlab-weights v1 container");
  const std::string_view count_line = r.line();
  if (count_line.substr(0, 8) != "tensors ") throw ParseError(r.line_start(), "expected 'tensors <count>'");
  const std::size_t count = parse_count(count_line.substr(8), r.line_start() + 8, "tensor count");

  std::vector<NamedTensor> out;
  std::vector<std::size_t> sizes;
  for (std::size_t i = 0; i < count; ++i) {
    const std::string_view l = r.line();
    const auto s1 = l.find(' ');
    const auto s2 = s1 == std::string_view::npos ? s1 : l.find(' ', s1 + 1);
    if (s2 == std::string_view::npos) throw ParseError(r.line_start(), "expected '<name> <rows> <cols>'");
    const std::string name(l.substr(0, s1));
    if (!valid_tensor_name(name)) throw ParseError(r.line_start(), "bad tensor name");
    const std::size_t rows = parse_count(l.substr(s1 + 1, s2 - s1 - 1), r.line_start() + s1 + 1, "row count");
    const std::size_t cols = parse_count(l.substr(s2 + 1), r.line_start() + s2 + 1, "column count");
    if (cols != 0 && rows > (std::size_t{1} << 40) / cols) throw ParseError(r.line_start(), "tensor too large");
    out.push_back({name, Matrix(rows, cols)});
    sizes.push_back(rows * cols);
  }
  if (r.line() != "end") throw ParseError(r.line_start(), "expected 'end'");

  std::size_t pos = r.offset();
  std::size_t total = 0;
  for (std::size_t s : sizes) total += s;
  if (bytes.size() - pos != total * 8) {
    throw ParseError(bytes.size() < pos + total * 8 ? bytes.size() : pos + total * 8,
                     "payload holds " + std::to_string(bytes.size() - pos) + " bytes, header declares " +
                         std::to_string(total * 8));
  }
  for (auto& t : out) {
    for (double& v : t.value.data()) {
      v = get_le(bytes.data() + pos);
      pos += 8;
    }
  }
  return out;
}

void save_weights(const std::string& path, const std::vector<NamedTensor>& tensors) {
  const std::string bytes = encode_weights(tensors);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ValidationError("save_weights: cannot open '" + path + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ValidationError("save_weights: write to '" + path + "' failed");
}

std::vector<NamedTensor> load_weights(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("load_weights: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_weights(ss.str());
}

const Matrix& tensor_named(const std::vector<NamedTensor>& tensors, const std::string& name) {
  for (const auto& t : tensors)
    if (t.name == name) return t.value;
  throw ParseError(0, "container has no tensor '" + name + "'");
}

}  // namespace radlab
