#include "mfl/config.hpp"

#include <boost/property_tree/ini_parser.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "mfl/libsvm.hpp"

namespace mfl {

namespace pt = boost::property_tree;

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  return s.substr(a, s.find_last_not_of(" \t\r\n") - a + 1);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError(key + ": expected a number, got '" + text + "'");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + text + "'");
}

std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) continue;
    out.push_back(parse_double(key, item));
  }
  return out;
}

std::string join(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += fmt(values[i]);
  }
  return out;
}

template <class E>
E parse_enum(const std::string& key, const std::string& text,
             const std::vector<std::pair<const char*, E>>& table) {
  const std::string s = trim(text);
  for (const auto& [name, value] : table) {
    if (s == name) return value;
  }
  std::string names;
  for (const auto& entry : table) names += std::string(names.empty() ? "" : ", ") + entry.first;
  throw ConfigError(key + ": unknown value '" + s + "' (expected one of " + names + ")");
}

template <class E>
std::string enum_name(E value, const std::vector<std::pair<const char*, E>>& table) {
  for (const auto& [name, v] : table) {
    if (v == value) return name;
  }
  return "?";
}

const std::vector<std::pair<const char*, RunMode>> kModes{{"master", RunMode::master},
                                                          {"baseline", RunMode::baseline}};
const std::vector<std::pair<const char*, Algo>> kAlgos{{"fedavg", Algo::fedavg},
                                                       {"fedomd", Algo::fedomd}};
const std::vector<std::pair<const char*, InitMode>> kInits{{"fresh", InitMode::fresh},
                                                           {"warm", InitMode::warm}};
const std::vector<std::pair<const char*, LossKind>> kLosses{
    {"binary-logistic", LossKind::binary_logistic},
    {"softmax-multiclass", LossKind::softmax_multiclass},
    {"quadratic-synthetic", LossKind::quadratic_synthetic}};
const std::vector<std::pair<const char*, Regularizer>> kRegs{{"l2-squared", Regularizer::l2_squared},
                                                             {"l1", Regularizer::l1}};
const std::vector<std::pair<const char*, BregmanKind>> kBregman{
    {"squared-euclidean", BregmanKind::squared_euclidean},
    {"diagonal-mahalanobis", BregmanKind::diagonal_mahalanobis}};
const std::vector<std::pair<const char*, SourceKind>> kSources{
    {"libsvm-file", SourceKind::libsvm_file},
    {"synthetic-quadratic", SourceKind::synthetic_quadratic},
    {"synthetic-logistic", SourceKind::synthetic_logistic}};
const std::vector<std::pair<const char*, GradientMode>> kGradients{
    {"full-batch", GradientMode::full_batch}, {"minibatch", GradientMode::minibatch}};
const std::vector<std::pair<const char*, OracleMode>> kOracles{
    {"offline", OracleMode::offline}, {"inline", OracleMode::inline_}, {"off", OracleMode::off}};

using Setter = void (*)(RunConfig&, const std::string& key, const std::string& value);

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table{
      {"run.mode", [](RunConfig& c, const std::string& k, const std::string& v) { c.mode = parse_enum(k, v, kModes); }},
      {"run.algo", [](RunConfig& c, const std::string& k, const std::string& v) { c.algo = parse_enum(k, v, kAlgos); }},
      {"run.T", [](RunConfig& c, const std::string& k, const std::string& v) { c.horizon = static_cast<int>(parse_uint(k, v)); }},
      {"run.n_dpus", [](RunConfig& c, const std::string& k, const std::string& v) { c.n_dpus = parse_uint(k, v); }},
      {"run.seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = parse_uint(k, v); }},
      {"run.workers", [](RunConfig& c, const std::string& k, const std::string& v) { c.workers = static_cast<unsigned>(parse_uint(k, v)); }},
      {"run.init", [](RunConfig& c, const std::string& k, const std::string& v) { c.init = parse_enum(k, v, kInits); }},
      {"loss.kind", [](RunConfig& c, const std::string& k, const std::string& v) { c.loss = parse_enum(k, v, kLosses); }},
      {"loss.lambda", [](RunConfig& c, const std::string& k, const std::string& v) { c.lambda = parse_double(k, v); }},
      {"loss.regularizer", [](RunConfig& c, const std::string& k, const std::string& v) { c.regularizer = parse_enum(k, v, kRegs); }},
      {"loss.B", [](RunConfig& c, const std::string& k, const std::string& v) { c.scale = parse_double(k, v); }},
      {"loss.mu", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.lipschitz = trim(v) == "auto" ? 0.0 : parse_double(k, v);
       }},
      {"loss.model_norm_cap", [](RunConfig& c, const std::string& k, const std::string& v) { c.model_norm_cap = parse_double(k, v); }},
      {"loss.bregman", [](RunConfig& c, const std::string& k, const std::string& v) { c.bregman.kind = parse_enum(k, v, kBregman); }},
      {"loss.bregman_weights", [](RunConfig& c, const std::string& k, const std::string& v) { c.bregman.weights = parse_list(k, v); }},
      {"rate.c1", [](RunConfig& c, const std::string& k, const std::string& v) { c.c1 = parse_double(k, v); }},
      {"rate.c2", [](RunConfig& c, const std::string& k, const std::string& v) { c.c2 = parse_double(k, v); }},
      {"rate.delta", [](RunConfig& c, const std::string& k, const std::string& v) { c.delta = parse_double(k, v); }},
      {"rate.test_scale", [](RunConfig& c, const std::string& k, const std::string& v) { c.test_scale = parse_double(k, v); }},
      {"rate.c_tilde", [](RunConfig& c, const std::string& k, const std::string& v) { c.c_tilde = parse_double(k, v); }},
      {"rate.window", [](RunConfig& c, const std::string& k, const std::string& v) { c.window = parse_uint(k, v); }},
      {"rate.reset_order_on_restart", [](RunConfig& c, const std::string& k, const std::string& v) { c.reset_order_on_restart = parse_bool(k, v); }},
      {"data.source", [](RunConfig& c, const std::string& k, const std::string& v) { c.source = parse_enum(k, v, kSources); }},
      {"data.path", [](RunConfig& c, const std::string&, const std::string& v) { c.path = trim(v); }},
      {"data.optimum", [](RunConfig& c, const std::string& k, const std::string& v) { c.optimum = parse_list(k, v); }},
      {"data.noise_sd", [](RunConfig& c, const std::string& k, const std::string& v) { c.noise_sd = parse_double(k, v); }},
      {"data.classes", [](RunConfig& c, const std::string& k, const std::string& v) { c.classes = parse_uint(k, v); }},
      {"data.dimension", [](RunConfig& c, const std::string& k, const std::string& v) { c.dimension = parse_uint(k, v); }},
      {"data.separation", [](RunConfig& c, const std::string& k, const std::string& v) { c.separation = parse_double(k, v); }},
      {"data.source_seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.source_seed = parse_uint(k, v); }},
      {"data.size_mean", [](RunConfig& c, const std::string& k, const std::string& v) { c.sizes.mean = parse_double(k, v); }},
      {"data.size_sd", [](RunConfig& c, const std::string& k, const std::string& v) { c.sizes.sd = parse_double(k, v); }},
      {"data.drift", [](RunConfig& c, const std::string&, const std::string& v) {
         try {
           c.drift = DriftSchedule::parse(v);
         } catch (const ParseError& e) {
           throw ConfigError(std::string("data.drift: ") + e.what());
         }
       }},
      {"fed.gradient", [](RunConfig& c, const std::string& k, const std::string& v) { c.gradient = parse_enum(k, v, kGradients); }},
      {"fed.gammas", [](RunConfig& c, const std::string& k, const std::string& v) { c.gammas = parse_list(k, v); }},
      {"oracle.mode", [](RunConfig& c, const std::string& k, const std::string& v) { c.oracle = parse_enum(k, v, kOracles); }},
      {"oracle.tolerance", [](RunConfig& c, const std::string& k, const std::string& v) { c.comparator.tolerance = parse_double(k, v); }},
      {"oracle.max_iterations", [](RunConfig& c, const std::string& k, const std::string& v) { c.comparator.max_iterations = static_cast<int>(parse_uint(k, v)); }},
      {"output.dir", [](RunConfig& c, const std::string&, const std::string& v) { c.out_dir = trim(v); }},
  };
  return table;
}

void set_value(RunConfig& config, const std::string& key, const std::string& value) {
  const auto it = setters().find(key);
  if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(config, key, value);
}

// Shipped experiment definitions. Drift classes are class ids (positions in the sorted label set).
const std::map<std::string, std::string>& presets() {
  static const std::map<std::string, std::string> table{
      {"paper-vi", R"([run]
mode = master
algo = fedavg
T = 500
n_dpus = 20
[loss]
kind = softmax-multiclass
lambda = 2e-4
B = 10
[rate]
window = 16
[data]
source = libsvm-file
size_mean = 1000
size_sd = 200
drift = 31 swap 0:1,2:3,4:5 | 129 swap 0:1,2:3,4:5 | 279 swap 0:1,2:3,4:5 | 310 swap 0:1,2:3,4:5 | 369 swap 0:1,2:3,4:5 | 462 swap 0:1,2:3,4:5
[oracle]
mode = off
)"},
      {"paper-mnist-cs", R"([run]
T = 500
n_dpus = 20
[loss]
kind = softmax-multiclass
lambda = 2e-4
[rate]
window = 16
[data]
source = libsvm-file
drift = 31 swap 0:1,2:3,4:5 | 129 swap 0:1,2:3,4:5 | 279 swap 0:1,2:3,4:5 | 310 swap 0:1,2:3,4:5 | 369 swap 0:1,2:3,4:5 | 462 swap 0:1,2:3,4:5
[oracle]
mode = off
)"},
      {"paper-mnist-ci", R"([run]
T = 500
n_dpus = 20
[loss]
kind = softmax-multiclass
lambda = 2e-4
[rate]
window = 16
[data]
source = libsvm-file
drift = 1 introduce 0,1 | 31 introduce 2,3 | 129 introduce 4 | 279 introduce 5,6 | 310 introduce 7 | 369 introduce 8 | 462 introduce 9
[oracle]
mode = off
)"},
      {"paper-covtype-cs", R"([run]
T = 500
n_dpus = 20
[loss]
kind = softmax-multiclass
lambda = 2e-4
[rate]
window = 16
[data]
source = libsvm-file
drift = 65 swap 0:1,2:3,4:5 | 187 swap 0:1,2:3,4:5 | 233 swap 0:1,2:3,4:5 | 367 swap 0:1,2:3,4:5 | 411 swap 0:1,2:3,4:5 | 489 swap 0:1,2:3,4:5
[oracle]
mode = off
)"},
      {"paper-covtype-ci", R"([run]
T = 500
n_dpus = 20
[loss]
kind = softmax-multiclass
lambda = 2e-4
[rate]
window = 16
[data]
source = libsvm-file
drift = 1 introduce 0 | 65 introduce 1 | 187 introduce 2 | 233 introduce 3 | 367 introduce 4 | 411 introduce 5 | 489 introduce 6
[oracle]
mode = off
)"},
      {"accept-stationary", R"([run]
T = 256
n_dpus = 5
[loss]
kind = quadratic-synthetic
lambda = 0
B = 1
[data]
source = synthetic-quadratic
optimum = 0.3,-0.2
noise_sd = 0.2
size_mean = 50
size_sd = 10
)"},
      {"accept-shift", R"([run]
T = 400
n_dpus = 20
init = warm
[loss]
kind = quadratic-synthetic
lambda = 0
B = 8
[rate]
test_scale = 1e-4
window = 32
reset_order_on_restart = true
[data]
source = synthetic-quadratic
optimum = 0,0
noise_sd = 0.2
size_mean = 1000
size_sd = 200
drift = 100 shift -2.1,-2.1
)"},
      {"accept-piecewise", R"([run]
T = 512
n_dpus = 20
init = warm
[loss]
kind = quadratic-synthetic
lambda = 0
B = 8
[rate]
test_scale = 1e-4
window = 32
reset_order_on_restart = true
[data]
source = synthetic-quadratic
optimum = 0,0
noise_sd = 0.2
size_mean = 1000
size_sd = 200
drift = 128 shift -2.1,-2.1 | 256 shift 0,0 | 384 shift 2.1,-2.1
)"},
  };
  return table;
}

}  // namespace

void RunConfig::validate() const {
  if (horizon < 1) throw ConfigError("run.T must be >= 1");
  if (n_dpus < 1) throw ConfigError("run.n_dpus must be >= 1");
  if (workers < 1) throw ConfigError("run.workers must be >= 1");
  if (!(scale > 0.0)) throw ConfigError("loss.B must be positive");
  if (lambda < 0.0) throw ConfigError("loss.lambda must be non-negative");
  if (lipschitz < 0.0) throw ConfigError("loss.mu must be positive or auto");
  if (!(test_scale > 0.0)) throw ConfigError("rate.test_scale must be positive");
  if (c_tilde < 0.0) throw ConfigError("rate.c_tilde must be non-negative");
  if (!(sizes.sd >= 0.0) || !std::isfinite(sizes.mean)) throw ConfigError("bad size law");
  rate().validate();
  if (source == SourceKind::libsvm_file) {
    if (path.empty()) throw ConfigError("data.path is required for libsvm-file sources");
    if (!std::filesystem::exists(path)) throw ConfigError("data file not found: " + path);
  }
  if (source == SourceKind::synthetic_quadratic && loss != LossKind::quadratic_synthetic) {
    throw ConfigError("synthetic-quadratic data needs loss.kind = quadratic-synthetic");
  }
  if (source != SourceKind::synthetic_quadratic && loss == LossKind::quadratic_synthetic) {
    throw ConfigError("quadratic-synthetic loss needs synthetic-quadratic data");
  }
  if (source == SourceKind::synthetic_quadratic && optimum.empty()) {
    throw ConfigError("data.optimum must not be empty");
  }
  for (double g : gammas) {
    if (!(g > 0.0) || g > 1.0) throw ConfigError("fed.gammas must lie in (0, 1]");
  }
  if (!gammas.empty() && gammas.size() != 1 && gammas.size() != n_dpus) {
    throw ConfigError("fed.gammas needs one value or one per DPU");
  }
  drift.validate(horizon);
}

RateSchedule RunConfig::rate() const {
  RateSchedule r;
  r.c1 = c1;
  r.c2 = c2;
  r.delta = delta;
  r.horizon = horizon;
  return r;
}

MasterConfig RunConfig::master_config() const {
  MasterConfig m;
  m.rate = rate();
  m.test_scale = test_scale;
  m.reset_order_on_restart = reset_order_on_restart;
  m.init = init;
  m.c_tilde = c_tilde;
  m.window = window;
  m.seed = seed;
  return m;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const auto& [name, text] : presets()) out.push_back(name);
  return out;
}

std::string preset_text(const std::string& name) {
  const auto it = presets().find(name);
  if (it == presets().end()) {
    std::string names;
    for (const auto& n : preset_names()) names += (names.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + name + "' (available: " + names + ")");
  }
  return it->second;
}

RunConfig parse_config(const std::string& ini_text, const RunConfig& base) {
  pt::ptree tree;
  std::istringstream in(ini_text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  RunConfig config = base;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("key '" + section + "' must sit inside a [section]");
    }
    for (const auto& [key, value] : body) set_value(config, section + "." + key, value.data());
  }
  return config;
}

RunConfig load_config_file(const std::string& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), base);
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override must look like section.key=value");
  set_value(config, trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

std::string echo_config(const RunConfig& c) {
  std::ostringstream o;
  o << "[run]\n"
    << "mode = " << enum_name(c.mode, kModes) << "\n"
    << "algo = " << enum_name(c.algo, kAlgos) << "\n"
    << "T = " << c.horizon << "\n"
    << "n_dpus = " << c.n_dpus << "\n"
    << "seed = " << c.seed << "\n"
    << "workers = " << c.workers << "\n"
    << "init = " << enum_name(c.init, kInits) << "\n"
    << "[loss]\n"
    << "kind = " << enum_name(c.loss, kLosses) << "\n"
    << "lambda = " << fmt(c.lambda) << "\n"
    << "regularizer = " << enum_name(c.regularizer, kRegs) << "\n"
    << "B = " << fmt(c.scale) << "\n"
    << "mu = " << (c.lipschitz == 0.0 ? std::string("auto") : fmt(c.lipschitz)) << "\n"
    << "model_norm_cap = " << fmt(c.model_norm_cap) << "\n"
    << "bregman = " << enum_name(c.bregman.kind, kBregman) << "\n"
    << "bregman_weights = " << join(c.bregman.weights) << "\n"
    << "[rate]\n"
    << "c1 = " << fmt(c.c1) << "\n"
    << "c2 = " << fmt(c.c2) << "\n"
    << "delta = " << fmt(c.delta) << "\n"
    << "test_scale = " << fmt(c.test_scale) << "\n"
    << "c_tilde = " << fmt(c.c_tilde) << "\n"
    << "window = " << c.window << "\n"
    << "reset_order_on_restart = " << (c.reset_order_on_restart ? "true" : "false") << "\n"
    << "[data]\n"
    << "source = " << enum_name(c.source, kSources) << "\n"
    << "path = " << c.path << "\n"
    << "optimum = " << join(c.optimum) << "\n"
    << "noise_sd = " << fmt(c.noise_sd) << "\n"
    << "classes = " << c.classes << "\n"
    << "dimension = " << c.dimension << "\n"
    << "separation = " << fmt(c.separation) << "\n"
    << "source_seed = " << c.source_seed << "\n"
    << "size_mean = " << fmt(c.sizes.mean) << "\n"
    << "size_sd = " << fmt(c.sizes.sd) << "\n"
    << "drift = " << c.drift.to_string() << "\n"
    << "[fed]\n"
    << "gradient = " << enum_name(c.gradient, kGradients) << "\n"
    << "gammas = " << join(c.gammas) << "\n"
    << "[oracle]\n"
    << "mode = " << enum_name(c.oracle, kOracles) << "\n"
    << "tolerance = " << fmt(c.comparator.tolerance) << "\n"
    << "max_iterations = " << c.comparator.max_iterations << "\n"
    << "[output]\n"
    << "dir = " << c.out_dir << "\n";
  return o.str();
}

DataSource build_source(const RunConfig& config) {
  switch (config.source) {
    case SourceKind::libsvm_file: {
      const auto encoding = config.loss == LossKind::binary_logistic ? LabelEncoding::signed_binary
                                                                    : LabelEncoding::class_index;
      return DataSource::from_libsvm(load_libsvm(config.path), encoding);
    }
    case SourceKind::synthetic_quadratic:
      return DataSource::synthetic_quadratic(config.optimum, config.noise_sd);
    case SourceKind::synthetic_logistic:
      return DataSource::synthetic_logistic(config.classes, config.dimension, config.separation,
                                            config.noise_sd, config.source_seed);
  }
  throw ConfigError("unknown data source");
}

LossModel build_loss_model(const RunConfig& config, const DataSource& source) {
  LossModel lm;
  lm.kind = config.loss;
  lm.lambda = config.lambda;
  lm.regularizer = config.regularizer;
  lm.scale = config.scale;
  lm.lipschitz = config.lipschitz > 0.0 ? config.lipschitz : 1.0;
  switch (config.loss) {
    case LossKind::binary_logistic:
      if (source.num_classes() != 2) {
        throw ConfigError("binary-logistic needs exactly two classes, the data has " +
                          std::to_string(source.num_classes()));
      }
      lm.dimension = source.feature_dim;
      break;
    case LossKind::softmax_multiclass:
      lm.num_classes = source.num_classes();
      lm.dimension = source.feature_dim * lm.num_classes;
      break;
    case LossKind::quadratic_synthetic:
      lm.dimension = source.feature_dim;
      break;
  }
  lm.validate();
  return lm;
}

std::string to_string(RunMode mode) { return enum_name(mode, kModes); }
std::string to_string(Algo algo) { return enum_name(algo, kAlgos); }
std::string to_string(LossKind kind) { return enum_name(kind, kLosses); }
std::string to_string(SourceKind kind) { return enum_name(kind, kSources); }

}  // namespace mfl
