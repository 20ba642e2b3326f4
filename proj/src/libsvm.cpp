#include "mfl/libsvm.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <string>
#include <string_view>

namespace mfl {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

// std::from_chars for double is available in libstdc++ 11.
double parse_double(std::string_view tok, std::size_t line) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
    throw ParseError("bad number '" + std::string(tok) + "'", line);
  }
  return v;
}

int parse_label(std::string_view tok, std::size_t line) {
  const double v = parse_double(tok, line);
  if (v != std::floor(v) || std::abs(v) > 1e9) {
    throw ParseError("label must be an integer, got '" + std::string(tok) + "'", line);
  }
  return static_cast<int>(v);
}

}  // namespace

LibsvmData parse_libsvm(std::istream& in) {
  LibsvmData data;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    Datapoint p;
    std::size_t pos = 0;
    bool first = true;
    while (pos < line.size()) {
      const auto end = std::min(line.find_first_of(" \t", pos), line.size());
      const auto tok = line.substr(pos, end - pos);
      pos = line.find_first_not_of(" \t", end);
      if (pos == std::string_view::npos) pos = line.size();
      if (first) {
        p.label = parse_label(tok, line_no);
        first = false;
        continue;
      }
      const auto colon = tok.find(':');
      if (colon == std::string_view::npos || colon == 0) {
        throw ParseError("expected <index>:<value>, got '" + std::string(tok) + "'", line_no);
      }
      std::uint64_t idx = 0;
      const auto idx_tok = tok.substr(0, colon);
      const auto [ptr, ec] = std::from_chars(idx_tok.data(), idx_tok.data() + idx_tok.size(), idx);
      if (ec != std::errc() || ptr != idx_tok.data() + idx_tok.size() || idx == 0 ||
          idx > UINT32_MAX) {
        throw ParseError("bad feature index '" + std::string(idx_tok) + "'", line_no);
      }
      const auto zero_based = static_cast<std::uint32_t>(idx - 1);
      if (!p.index.empty() && zero_based <= p.index.back()) {
        throw ParseError("feature indices must be strictly increasing", line_no);
      }
      p.index.push_back(zero_based);
      p.value.push_back(parse_double(tok.substr(colon + 1), line_no));
    }
    if (!p.index.empty()) data.dimension = std::max<std::size_t>(data.dimension, p.index.back() + 1);
    data.classes.insert(p.label);
    data.points.push_back(std::move(p));
  }
  return data;
}

LibsvmData load_libsvm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open LIBSVM file '" + path + "'");
  return parse_libsvm(in);
}

void write_libsvm(std::ostream& out, std::span<const Datapoint> points) {
  const auto old_precision = out.precision(17);
  for (const auto& p : points) {
    if (p.label > 0) out << '+';
    out << p.label;
    for (std::size_t j = 0; j < p.index.size(); ++j) out << ' ' << p.index[j] + 1 << ':' << p.value[j];
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace mfl
