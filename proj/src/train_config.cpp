#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "chopnet/error.hpp"
#include "chopnet/trainer.hpp"

namespace chopnet {

namespace {

constexpr std::array<std::string_view, 12> kKeys = {
    "epochs",   "batch_size", "solver",       "base_lr", "lr_policy", "step_size_percent",
    "gamma",    "momentum",   "weight_decay", "seed",    "snapshot_interval_epochs",
    "validation_interval_epochs"};

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string_view unquote(std::string_view s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* expected) {
  throw Error(ErrorCode::InvalidConfig, "key '" + std::string(key) + "': cannot parse '" + std::string(value) +
                                            "' as " + expected);
}

template <typename Int>
Int parse_int(std::string_view key, std::string_view value) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "an integer");
  return out;
}

double parse_real(std::string_view key, std::string_view value) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || !std::isfinite(out)) {
    bad_value(key, value, "a finite real number");
  }
  return out;
}

std::string format_real(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace

void TrainingConfig::validate() const {
  const auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(base_lr >= 0.0) || !std::isfinite(base_lr)) fail("base_lr must be a finite non-negative number");
  if (!(step_size_percent > 0.0 && step_size_percent <= 100.0)) fail("step_size_percent must be in (0, 100]");
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma must be in (0, 1]");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) fail("weight_decay must be >= 0");
  if (snapshot_interval_epochs < 1) fail("snapshot_interval_epochs must be >= 1");
  if (validation_interval_epochs < 1) fail("validation_interval_epochs must be >= 1");
}

std::span<const std::string_view> config_keys() { return kKeys; }

void set_config_value(TrainingConfig& c, std::string_view key, std::string_view raw) {
  const std::string_view value = unquote(trim(raw));
  if (key == "epochs") {
    c.epochs = parse_int<int>(key, value);
  } else if (key == "batch_size") {
    c.batch_size = parse_int<int>(key, value);
  } else if (key == "solver") {
    if (value != "SGD" && value != "sgd") bad_value(key, value, "a solver (only SGD is supported)");
    c.solver = Solver::Sgd;
  } else if (key == "base_lr") {
    c.base_lr = parse_real(key, value);
  } else if (key == "lr_policy") {
    if (value != "step_down" && value != "step") bad_value(key, value, "a policy (only step_down is supported)");
    c.lr_policy = LrPolicy::StepDown;
  } else if (key == "step_size_percent") {
    c.step_size_percent = parse_real(key, value);
  } else if (key == "gamma") {
    c.gamma = parse_real(key, value);
  } else if (key == "momentum") {
    c.momentum = parse_real(key, value);
  } else if (key == "weight_decay") {
    c.weight_decay = parse_real(key, value);
  } else if (key == "seed") {
    c.seed = parse_int<std::uint64_t>(key, value);
  } else if (key == "snapshot_interval_epochs") {
    c.snapshot_interval_epochs = parse_int<int>(key, value);
  } else if (key == "validation_interval_epochs") {
    c.validation_interval_epochs = parse_int<int>(key, value);
  } else {
    throw Error(ErrorCode::InvalidConfig, "unknown config key '" + std::string(key) + "'");
  }
}

TrainingConfig parse_config(std::string_view text, TrainingConfig base) {
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::InvalidConfig, "line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    set_config_value(base, trim(view.substr(0, eq)), view.substr(eq + 1));
  }
  base.validate();
  return base;
}

TrainingConfig read_config(const std::filesystem::path& path, TrainingConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string format_config(const TrainingConfig& c) {
  std::string out;
  out += "epochs = " + std::to_string(c.epochs) + "\n";
  out += "batch_size = " + std::to_string(c.batch_size) + "\n";
  out += "solver = \"SGD\"\n";
  out += "base_lr = " + format_real(c.base_lr) + "\n";
  out += "lr_policy = \"step_down\"\n";
  out += "step_size_percent = " + format_real(c.step_size_percent) + "\n";
  out += "gamma = " + format_real(c.gamma) + "\n";
  out += "momentum = " + format_real(c.momentum) + "\n";
  out += "weight_decay = " + format_real(c.weight_decay) + "\n";
  out += "seed = " + std::to_string(c.seed) + "\n";
  out += "snapshot_interval_epochs = " + std::to_string(c.snapshot_interval_epochs) + "\n";
  out += "validation_interval_epochs = " + std::to_string(c.validation_interval_epochs) + "\n";
  return out;
}

int lr_step_epochs(const TrainingConfig& config) {
  // The small epsilon keeps exact products such as 30 * 50% = 15 from
  // rounding up through floating-point noise.
  const double raw = config.epochs * config.step_size_percent / 100.0;
  const int step = static_cast<int>(std::ceil(raw - 1e-9));
  return step < 1 ? 1 : step;
}

double lr_at(const TrainingConfig& config, int epoch) {
  if (epoch < 0 || epoch >= config.epochs) {
    throw Error(ErrorCode::EpochOutOfRange,
                "epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(config.epochs) + ")");
  }
  const int drops = epoch / lr_step_epochs(config);
  double lr = config.base_lr;
  for (int i = 0; i < drops; ++i) lr *= config.gamma;
  return lr;
}

}  // namespace chopnet
