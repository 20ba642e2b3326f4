#pragma once

#include <istream>
#include <ostream>
#include <set>
#include <vector>

#include "mfl/loss.hpp"

namespace mfl {

/// Parsed LIBSVM text. Labels are kept verbatim (raw integers); indices become 0-based.
struct LibsvmData {
  std::vector<Datapoint> points;
  std::size_t dimension = 0;  // max 1-based index seen
  std::set<int> classes;
};

/// Reads lines of the form `<label> <idx>:<val> ...` with 1-based, strictly increasing
/// indices. Blank lines and `#` comments are skipped. Throws ParseError with the line number.
LibsvmData parse_libsvm(std::istream& in);
LibsvmData load_libsvm(const std::string& path);

void write_libsvm(std::ostream& out, std::span<const Datapoint> points);

}  // namespace mfl
