#include "radlab/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace radlab {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Strips a trailing comment that is not inside a quoted string.
std::string_view strip_comment(std::string_view s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

bool valid_name(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
    if (!ok) return false;
  }
  return true;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size() && !s.empty();
}

std::vector<std::string_view> split_array(std::string_view raw, bool& ok) {
  std::vector<std::string_view> items;
  raw = trim(raw);
  ok = raw.size() >= 2 && raw.front() == '[' && raw.back() == ']';
  if (!ok) return items;
  std::string_view body = trim(raw.substr(1, raw.size() - 2));
  if (body.empty()) return items;
  while (true) {
    const auto comma = body.find(',');
    items.push_back(trim(body.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    body = body.substr(comma + 1);
  }
  return items;
}

}  // namespace

Config Config::parse(std::string_view text, const std::string& origin) {
  Config cfg;
  cfg.origin_ = origin;
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string_view raw_line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::string_view line = trim(strip_comment(raw_line));
    if (line.empty()) continue;
    auto fail = [&](const std::string& what) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + what);
    };
    if (line.front() == '[') {
      if (line.back() != ']') fail("unterminated section header");
      const std::string_view name = trim(line.substr(1, line.size() - 2));
      if (!valid_name(name)) fail("bad section name '" + std::string(name) + "'");
      section = std::string(name);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail("expected key = value");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (!valid_name(key)) fail("bad key '" + std::string(key) + "'");
    if (value.empty()) fail("missing value for '" + std::string(key) + "'");
    const std::string full = section.empty() ? std::string(key) : section + "." + std::string(key);
    if (cfg.entries_.count(full)) fail("duplicate key '" + full + "'");
    cfg.entries_[full] = Entry{std::string(value), line_no};
  }
  return cfg;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

bool Config::has(const std::string& key) const { return entries_.count(key) != 0; }

void Config::set(const std::string& key, const std::string& raw) {
  auto& e = entries_[key];
  e.raw = raw;
}

const Config::Entry* Config::find(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return nullptr;
  it->second.used = true;
  return &it->second;
}

void Config::bad_value(const std::string& key, const Entry& e, const char* expected) const {
  throw ConfigError(origin_ + ":" + std::to_string(e.line) + ": '" + key + "' expects " + expected + ", got '" +
                    e.raw + "'");
}

double Config::get_double(const std::string& key, double fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  double v = 0.0;
  if (!parse_number(e->raw, v)) bad_value(key, *e, "a number");
  return v;
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  std::uint64_t v = 0;
  if (!parse_number(e->raw, v)) bad_value(key, *e, "a non-negative integer");
  return v;
}

std::size_t Config::get_size(const std::string& key, std::size_t fallback) const {
  return static_cast<std::size_t>(get_u64(key, fallback));
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  if (e->raw == "true") return true;
  if (e->raw == "false") return false;
  bad_value(key, *e, "true or false");
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  const std::string& r = e->raw;
  if (r.size() >= 2 && r.front() == '"' && r.back() == '"') return r.substr(1, r.size() - 2);
  // bare words are accepted for enum-like values
  if (valid_name(r)) return r;
  bad_value(key, *e, "a string");
}

std::vector<double> Config::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  bool ok = false;
  std::vector<double> out;
  for (auto item : split_array(e->raw, ok)) {
    double v = 0.0;
    if (!parse_number(item, v)) ok = false;
    out.push_back(v);
  }
  if (!ok) bad_value(key, *e, "an array of numbers");
  return out;
}

std::vector<std::uint64_t> Config::get_u64s(const std::string& key,
                                            const std::vector<std::uint64_t>& fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  bool ok = false;
  std::vector<std::uint64_t> out;
  for (auto item : split_array(e->raw, ok)) {
    std::uint64_t v = 0;
    if (!parse_number(item, v)) ok = false;
    out.push_back(v);
  }
  if (!ok) bad_value(key, *e, "an array of non-negative integers");
  return out;
}

void Config::reject_unknown() const {
  std::string unknown;
  for (const auto& [key, e] : entries_) {
    if (e.used) continue;
    if (!unknown.empty()) unknown += ", ";
    unknown += key + " (line " + std::to_string(e.line) + ")";
  }
  if (!unknown.empty()) throw ConfigError(origin_ + ": unknown key(s): " + unknown);
}

std::map<std::string, std::string> Config::entries() const {
  std::map<std::string, std::string> out;
  for (const auto& [key, e] : entries_) out[key] = e.raw;
  return out;
}

}  // namespace radlab
