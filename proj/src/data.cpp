#include "mfl/data.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace mfl {

namespace {

constexpr std::uint64_t kSizeStream = 1;
constexpr std::uint64_t kPointStream = 2;

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = s.find(sep, pos);
    out.push_back(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string_view::npos) return {};
  return s.substr(a, s.find_last_not_of(" \t\r\n") - a + 1);
}

double to_double(std::string_view tok) {
  std::string s(trim(tok));
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ParseError("bad number '" + s + "' in drift schedule");
  }
  if (used != s.size()) throw ParseError("bad number '" + s + "' in drift schedule");
  return v;
}

int to_int(std::string_view tok) {
  const double v = to_double(tok);
  if (v != std::floor(v)) throw ParseError("expected integer in drift schedule, got '" + std::string(tok) + "'");
  return static_cast<int>(v);
}

Datapoint dense_point(const std::vector<double>& values, int label) {
  Datapoint p;
  p.index.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) p.index[i] = static_cast<std::uint32_t>(i);
  p.value = values;
  p.label = label;
  return p;
}

int encode(int class_id, LabelEncoding enc) {
  switch (enc) {
    case LabelEncoding::signed_binary: return class_id == 0 ? -1 : 1;
    case LabelEncoding::class_index: return class_id;
    case LabelEncoding::none: break;
  }
  return 0;
}

// Floyd's algorithm: k distinct values from [0, n), in generation order.
std::vector<std::size_t> sample_distinct(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::vector<std::size_t> out;
  out.reserve(k);
  std::unordered_set<std::size_t> seen;
  seen.reserve(k * 2);
  for (std::size_t j = n - k; j < n; ++j) {
    const std::size_t r = std::uniform_int_distribution<std::size_t>(0, j)(rng);
    const std::size_t pick = seen.contains(r) ? j : r;
    seen.insert(pick);
    out.push_back(pick);
  }
  return out;
}

}  // namespace

DataSource DataSource::from_libsvm(LibsvmData data, LabelEncoding encoding) {
  DataSource s;
  s.kind = SourceKind::libsvm_file;
  s.classes.assign(data.classes.begin(), data.classes.end());
  s.feature_dim = data.dimension;
  s.encoding = encoding;
  if (encoding == LabelEncoding::signed_binary && s.classes.size() != 2) {
    throw ConfigError("binary encoding needs exactly two labels, file has " +
                      std::to_string(s.classes.size()));
  }
  s.by_class.resize(s.classes.size());
  for (std::size_t i = 0; i < data.points.size(); ++i) {
    const auto it = std::lower_bound(s.classes.begin(), s.classes.end(), data.points[i].label);
    s.by_class[static_cast<std::size_t>(it - s.classes.begin())].push_back(static_cast<std::uint32_t>(i));
  }
  s.pool = std::make_shared<const std::vector<Datapoint>>(std::move(data.points));
  return s;
}

DataSource DataSource::synthetic_quadratic(std::vector<double> optimum, double noise_sd) {
  if (optimum.empty()) throw ConfigError("quadratic source needs a non-empty optimum");
  if (noise_sd < 0.0) throw ConfigError("noise sd must be non-negative");
  DataSource s;
  s.kind = SourceKind::synthetic_quadratic;
  s.feature_dim = optimum.size();
  s.optimum = std::move(optimum);
  s.noise_sd = noise_sd;
  s.encoding = LabelEncoding::none;
  return s;
}

DataSource DataSource::synthetic_logistic(std::size_t num_classes, std::size_t dim,
                                          double separation, double noise_sd,
                                          std::uint64_t seed) {
  if (num_classes < 2 || dim == 0) throw ConfigError("logistic source needs >= 2 classes and dim > 0");
  DataSource s;
  s.kind = SourceKind::synthetic_logistic;
  s.feature_dim = dim;
  s.noise_sd = noise_sd;
  s.encoding = num_classes == 2 ? LabelEncoding::signed_binary : LabelEncoding::class_index;
  for (std::size_t c = 0; c < num_classes; ++c) s.classes.push_back(static_cast<int>(c));
  auto rng = make_stream(seed, 0, 0, 0xC1A55);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sd = separation / std::sqrt(static_cast<double>(dim));
  s.class_means.assign(num_classes, std::vector<double>(dim));
  for (auto& mean : s.class_means) {
    for (auto& v : mean) v = sd * normal(rng);
  }
  return s;
}

void DriftSchedule::validate(int horizon) const {
  int prev = 0;
  for (const auto& e : events) {
    if (e.round <= prev) throw ConfigError("drift event rounds must be strictly increasing");
    if (e.round < 1 || e.round > horizon) {
      throw ConfigError("drift event round " + std::to_string(e.round) + " outside [1, " +
                        std::to_string(horizon) + "]");
    }
    prev = e.round;
  }
}

int DriftSchedule::change_rounds(int horizon) const {
  int n = horizon >= 1 ? 1 : 0;
  for (const auto& e : events) {
    if (e.round > 1 && e.round <= horizon) ++n;
  }
  return n;
}

std::string DriftSchedule::to_string() const {
  std::ostringstream out;
  out.precision(17);
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (i) out << " | ";
    out << e.round << ' ';
    switch (e.kind) {
      case DriftKind::class_introduce:
        out << "introduce ";
        for (std::size_t j = 0; j < e.classes.size(); ++j) out << (j ? "," : "") << e.classes[j];
        break;
      case DriftKind::class_swap:
        out << "swap ";
        for (std::size_t j = 0; j < e.pairs.size(); ++j) {
          out << (j ? "," : "") << e.pairs[j].first << ':' << e.pairs[j].second;
        }
        break;
      case DriftKind::comparator_shift:
        out << "shift ";
        for (std::size_t j = 0; j < e.optimum.size(); ++j) out << (j ? "," : "") << e.optimum[j];
        break;
    }
  }
  return out.str();
}

DriftSchedule DriftSchedule::parse(std::string_view text) {
  DriftSchedule schedule;
  if (trim(text).empty()) return schedule;
  for (auto item : split(text, '|')) {
    item = trim(item);
    std::istringstream words{std::string(item)};
    std::string round, kind, payload;
    if (!(words >> round >> kind >> payload)) {
      throw ParseError("drift event needs '<round> <kind> <payload>': '" + std::string(item) + "'");
    }
    std::string extra;
    if (words >> extra) throw ParseError("unexpected text in drift event '" + std::string(item) + "'");
    DriftEvent e;
    e.round = to_int(round);
    if (kind == "introduce") {
      e.kind = DriftKind::class_introduce;
      for (auto c : split(payload, ',')) e.classes.push_back(to_int(c));
    } else if (kind == "swap") {
      e.kind = DriftKind::class_swap;
      for (auto pair : split(payload, ',')) {
        const auto parts = split(pair, ':');
        if (parts.size() != 2) throw ParseError("swap pair must be 'a:b', got '" + std::string(pair) + "'");
        e.pairs.emplace_back(to_int(parts[0]), to_int(parts[1]));
      }
    } else if (kind == "shift") {
      e.kind = DriftKind::comparator_shift;
      for (auto v : split(payload, ',')) e.optimum.push_back(to_double(v));
    } else {
      throw ParseError("unknown drift kind '" + kind + "'");
    }
    schedule.events.push_back(std::move(e));
  }
  return schedule;
}

DriftState drift_state_at(const DataSource& source, const DriftSchedule& schedule, int t) {
  const std::size_t k = source.num_classes();
  const bool has_introductions =
      std::any_of(schedule.events.begin(), schedule.events.end(),
                  [](const DriftEvent& e) { return e.kind == DriftKind::class_introduce; });
  DriftState state;
  state.active.assign(k, !has_introductions);
  state.label_map.resize(k);
  for (std::size_t c = 0; c < k; ++c) state.label_map[c] = static_cast<int>(c);
  state.optimum = source.optimum;

  auto check_class = [k](int c) {
    if (c < 0 || static_cast<std::size_t>(c) >= k) {
      throw ConfigError("drift event refers to class " + std::to_string(c) + " but the source has " +
                        std::to_string(k) + " classes");
    }
    return static_cast<std::size_t>(c);
  };
  for (const auto& e : schedule.events) {
    if (e.round > t) break;
    switch (e.kind) {
      case DriftKind::class_introduce:
        for (int c : e.classes) state.active[check_class(c)] = true;
        break;
      case DriftKind::class_swap:
        for (auto [a, b] : e.pairs) std::swap(state.label_map[check_class(a)], state.label_map[check_class(b)]);
        break;
      case DriftKind::comparator_shift:
        if (source.kind != SourceKind::synthetic_quadratic) {
          throw ConfigError("comparator shift only applies to the synthetic quadratic source");
        }
        if (e.optimum.size() != source.feature_dim) throw ConfigError("shifted optimum has the wrong dimension");
        state.optimum = e.optimum;
        break;
    }
  }
  return state;
}

std::size_t SizeLaw::draw(std::mt19937_64& rng) const {
  const double v = sd > 0.0 ? std::normal_distribution<double>(mean, sd)(rng) : mean;
  return static_cast<std::size_t>(std::floor(std::max(1.0, v)));
}

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t round, std::uint64_t dpu,
                            std::uint64_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(round), static_cast<std::uint32_t>(round >> 32),
                    static_cast<std::uint32_t>(dpu), static_cast<std::uint32_t>(purpose)};
  return std::mt19937_64(seq);
}

RoundDataset sample_round(const DataSource& source, const DriftSchedule& schedule, int t,
                          std::size_t n_dpus, const SizeLaw& law, std::uint64_t seed) {
  if (t < 1) throw ConfigError("round index must be >= 1");
  if (n_dpus == 0) throw ConfigError("need at least one DPU");
  const DriftState state = drift_state_at(source, schedule, t);

  std::vector<int> active_classes;
  for (std::size_t c = 0; c < state.active.size(); ++c) {
    if (state.active[c]) active_classes.push_back(static_cast<int>(c));
  }
  if (source.kind != SourceKind::synthetic_quadratic && active_classes.empty()) {
    throw ConfigError("no active classes at round " + std::to_string(t));
  }

  // cumulative bucket sizes over active classes (libsvm pools)
  std::vector<std::size_t> cumulative;
  std::size_t active_pool = 0;
  if (source.kind == SourceKind::libsvm_file) {
    for (int c : active_classes) {
      active_pool += source.by_class[static_cast<std::size_t>(c)].size();
      cumulative.push_back(active_pool);
    }
    if (active_pool == 0) throw ConfigError("active pool is empty at round " + std::to_string(t));
  }

  RoundDataset round;
  round.round = t;
  round.dpus.resize(n_dpus);
  round.sizes.resize(n_dpus);
  for (std::size_t n = 0; n < n_dpus; ++n) {
    std::normal_distribution<double> normal(0.0, 1.0);  // per DPU: the distribution caches draws
    auto size_rng = make_stream(seed, static_cast<std::uint64_t>(t), n, kSizeStream);
    const std::size_t size = law.draw(size_rng);
    auto rng = make_stream(seed, static_cast<std::uint64_t>(t), n, kPointStream);
    auto& out = round.dpus[n];
    out.reserve(size);

    switch (source.kind) {
      case SourceKind::libsvm_file: {
        std::vector<std::size_t> picks;
        if (size <= active_pool) {
          picks = sample_distinct(active_pool, size, rng);
        } else {
          round.with_replacement = true;
          std::uniform_int_distribution<std::size_t> any(0, active_pool - 1);
          for (std::size_t i = 0; i < size; ++i) picks.push_back(any(rng));
        }
        for (std::size_t pos : picks) {
          const auto bucket = static_cast<std::size_t>(
              std::upper_bound(cumulative.begin(), cumulative.end(), pos) - cumulative.begin());
          const std::size_t offset = pos - (bucket ? cumulative[bucket - 1] : 0);
          const int class_id = active_classes[bucket];
          Datapoint p = (*source.pool)[source.by_class[static_cast<std::size_t>(class_id)][offset]];
          p.label = encode(state.label_map[static_cast<std::size_t>(class_id)], source.encoding);
          out.push_back(std::move(p));
        }
        break;
      }
      case SourceKind::synthetic_quadratic: {
        std::vector<double> v(source.feature_dim);
        for (std::size_t i = 0; i < size; ++i) {
          for (std::size_t j = 0; j < v.size(); ++j) {
            v[j] = state.optimum[j] + (source.noise_sd > 0.0 ? source.noise_sd * normal(rng) : 0.0);
          }
          out.push_back(dense_point(v, 0));
        }
        break;
      }
      case SourceKind::synthetic_logistic: {
        std::uniform_int_distribution<std::size_t> pick(0, active_classes.size() - 1);
        std::vector<double> v(source.feature_dim);
        for (std::size_t i = 0; i < size; ++i) {
          const int class_id = active_classes[pick(rng)];
          const auto& mean = source.class_means[static_cast<std::size_t>(class_id)];
          for (std::size_t j = 0; j < v.size(); ++j) v[j] = mean[j] + source.noise_sd * normal(rng);
          out.push_back(dense_point(v, encode(state.label_map[static_cast<std::size_t>(class_id)], source.encoding)));
        }
        break;
      }
    }
    round.sizes[n] = out.size();
    round.total += out.size();
  }
  round.weights.resize(n_dpus);
  for (std::size_t n = 0; n < n_dpus; ++n) {
    round.weights[n] = static_cast<double>(round.sizes[n]) / static_cast<double>(round.total);
  }
  return round;
}

RoundSampler::RoundSampler(DataSource source, DriftSchedule schedule, std::size_t n_dpus,
                           SizeLaw law, std::uint64_t seed)
    : source_(std::move(source)),
      schedule_(std::move(schedule)),
      n_dpus_(n_dpus),
      law_(law),
      seed_(seed) {}

RoundDataset RoundSampler::sample(int t) const {
  return sample_round(source_, schedule_, t, n_dpus_, law_, seed_);
}

}  // namespace mfl
