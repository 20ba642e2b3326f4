#include <doctest.h>

#include <sstream>

#include "mfl/libsvm.hpp"

using namespace mfl;

namespace {

LibsvmData parse(const std::string& text) {
  std::istringstream in(text);
  return parse_libsvm(in);
}

}  // namespace

TEST_CASE("one binary line") {
  const auto d = parse("+1 1:0.5 3:-2\n");
  REQUIRE(d.points.size() == 1);
  CHECK(d.points[0].label == 1);
  CHECK(d.points[0].index == std::vector<std::uint32_t>{0, 2});
  CHECK(d.points[0].value == std::vector<double>{0.5, -2.0});
  CHECK(d.dimension == 3);
}

TEST_CASE("empty input") {
  const auto d = parse("");
  CHECK(d.points.empty());
  CHECK(d.dimension == 0);
  CHECK(d.classes.empty());
}

TEST_CASE("multi-class labels, comments and blank lines") {
  const auto d = parse("3 2:1.0\n\n# note\n1 1:0.5\n");
  CHECK(d.points.size() == 2);
  CHECK(d.classes == std::set<int>{1, 3});
  CHECK(d.dimension == 2);
}

TEST_CASE("label-only line has no features") {
  const auto d = parse("-1\n");
  REQUIRE(d.points.size() == 1);
  CHECK(d.points[0].index.empty());
}

TEST_CASE("malformed lines report their line number") {
  auto line_of = [](const std::string& text) -> long {
    try {
      parse(text);
    } catch (const ParseError& e) {
      return static_cast<long>(e.line());
    }
    return -1;
  };
  CHECK(line_of("1 1:0.5\n1 2:x\n") == 2);
  CHECK(line_of("1 1:0.5\n\n1 3:1 2:1\n") == 3);  // non-increasing
  CHECK(line_of("1 2:1 2:1\n") == 1);               // repeated index
  CHECK(line_of("1 0:1\n") == 1);                   // indices are 1-based
  CHECK(line_of("a 1:1\n") == 1);
  CHECK(line_of("1.5 1:1\n") == 1);
  CHECK(line_of("1 1-1\n") == 1);
}

TEST_CASE("parse, write, parse is the identity") {
  const std::string text = "+1 1:0.5 3:-2\n-1 2:0.1 7:1e-300\n3 4:0.30000000000000004\n";
  const auto first = parse(text);
  std::ostringstream out;
  write_libsvm(out, first.points);
  const auto second = parse(out.str());
  REQUIRE(second.points.size() == first.points.size());
  for (std::size_t i = 0; i < first.points.size(); ++i) {
    CHECK(second.points[i].label == first.points[i].label);
    CHECK(second.points[i].index == first.points[i].index);
    CHECK(second.points[i].value == first.points[i].value);
  }
  CHECK(second.dimension == first.dimension);
}

TEST_CASE("shipped sample files load") {
  const auto multi = load_libsvm(std::string(MFL_TEST_DATA_DIR) + "/toy6.libsvm");
  CHECK(multi.points.size() == 600);
  CHECK(multi.classes.size() == 6);
  CHECK(multi.dimension == 4);
  const auto binary = load_libsvm(std::string(MFL_TEST_DATA_DIR) + "/toy2.libsvm");
  CHECK(binary.classes == std::set<int>{-1, 1});
  CHECK_THROWS_AS(load_libsvm("/nonexistent/file.libsvm"), ConfigError);
}
