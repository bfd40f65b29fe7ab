#include "mvx/config.hpp"

#include "mvx/builtin_models.hpp"
#include "mvx/switching.hpp"

#include <fstream>
#include <sstream>

namespace mvx::cli {

namespace {

const char* kKinds[] = {"moment-decay", "contraction", "contraction-switching",
                        "picard", "verify", "invariant"};

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct KeyCtx {
  std::string origin;
  int line = 0;
  std::string key;

  std::string where() const {
    return origin + ":" + std::to_string(line) + ": key '" + key + "'";
  }
};

std::vector<double> parse_numbers(const std::string& v, const KeyCtx& ctx) {
  std::istringstream in(v);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw SimError(ctx.where() + ": '" + tok + "' is not a number");
    }
  }
  if (out.empty()) throw SimError(ctx.where() + ": expected a number");
  return out;
}

double parse_double(const std::string& v, const KeyCtx& ctx) {
  const auto nums = parse_numbers(v, ctx);
  if (nums.size() != 1)
    throw SimError(ctx.where() + ": expected a single number");
  return nums[0];
}

std::int64_t parse_int(const std::string& v, const KeyCtx& ctx) {
  const double d = parse_double(v, ctx);
  const auto i = static_cast<std::int64_t>(std::llround(d));
  if (static_cast<double>(i) != d)
    throw SimError(ctx.where() + ": expected an integer");
  return i;
}

bool parse_bool(const std::string& v, const KeyCtx& ctx) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw SimError(ctx.where() + ": expected 0 or 1");
}

Mat parse_matrix(const std::string& v, const KeyCtx& ctx) {
  std::vector<std::vector<double>> rows;
  std::string row;
  std::istringstream in(v);
  while (std::getline(in, row, ';')) rows.push_back(parse_numbers(row, ctx));
  const std::size_t m = rows.size();
  Mat q(m, rows.front().size());
  for (std::size_t i = 0; i < m; ++i) {
    if (rows[i].size() != rows.front().size())
      throw SimError(ctx.where() + ": ragged matrix rows");
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      q(static_cast<std::int64_t>(i), static_cast<std::int64_t>(j)) =
          rows[i][j];
  }
  if (q.rows() != q.cols())
    throw SimError(ctx.where() + ": generator matrix must be square");
  return q;
}

InitSpec parse_init(const std::string& v, const KeyCtx& ctx) {
  std::istringstream in(v);
  std::string word;
  in >> word;
  std::string rest;
  std::getline(in, rest);
  const auto nums = parse_numbers(rest, ctx);
  auto tovec = [](const std::vector<double>& xs, std::size_t lo,
                  std::size_t n) {
    Vec out(static_cast<std::int64_t>(n));
    for (std::size_t k = 0; k < n; ++k)
      out[static_cast<std::int64_t>(k)] = xs[lo + k];
    return out;
  };
  InitSpec init;
  if (word == "point") {
    init.kind = InitSpec::Kind::Point;
    init.a = tovec(nums, 0, nums.size());
  } else if (word == "uniform" || word == "gaussian") {
    init.kind = word == "uniform" ? InitSpec::Kind::Uniform
                                  : InitSpec::Kind::Gaussian;
    if (nums.size() % 2 != 0)
      throw SimError(ctx.where() + ": " + word +
                     " needs an even count of numbers (lows then highs)");
    const std::size_t h = nums.size() / 2;
    init.a = tovec(nums, 0, h);
    init.b = tovec(nums, h, h);
  } else {
    throw SimError(ctx.where() + ": unknown init kind '" + word +
                   "' (point, uniform, gaussian)");
  }
  return init;
}

int parse_regime_label(const std::string& v, const KeyCtx& ctx) {
  const std::int64_t label = parse_int(v, ctx);
  if (label < 1)
    throw SimError(ctx.where() + ": regime labels start at 1");
  return static_cast<int>(label - 1);
}

void apply_key(ExperimentConfig& cfg, const std::string& section,
               const KeyCtx& ctx, const std::string& value) {
  const std::string& key = ctx.key;
  if (section == "model") {
    if (key == "name") cfg.model_name = value;
    else if (key == "beta") cfg.beta = parse_double(value, ctx);
    else if (key == "q") cfg.q_override = parse_matrix(value, ctx);
    else if (key == "freeze-regime")
      cfg.freeze_regime = parse_regime_label(value, ctx);
    else
      throw SimError(ctx.where() + ": unknown key in [model]");
  } else if (section == "sim") {
    if (key == "dt") cfg.sim.dt = parse_double(value, ctx);
    else if (key == "T") cfg.sim.T = parse_double(value, ctx);
    else if (key == "particles")
      cfg.sim.particles = parse_int(value, ctx);
    else if (key == "seed")
      cfg.sim.seed = static_cast<std::uint64_t>(parse_int(value, ctx));
    else if (key == "switch-mode") {
      try {
        cfg.sim.mode = switching::parse_switch_mode(value);
      } catch (const SimError& e) {
        throw SimError(ctx.where() + ": " + e.what());
      }
    } else if (key == "trunc") cfg.sim.trunc = parse_double(value, ctx);
    else if (key == "threads")
      cfg.sim.threads = static_cast<int>(parse_int(value, ctx));
    else if (key == "record") {
      cfg.sim.record_stride = static_cast<int>(parse_int(value, ctx));
      cfg.has_record = true;
    }
    else if (key == "init") {
      const int keep = cfg.init.regime;
      cfg.init = parse_init(value, ctx);
      cfg.init.regime = keep;
      cfg.has_init = true;
    } else if (key == "init-regime")
      cfg.init.regime = parse_regime_label(value, ctx);
    else if (key == "init2") {
      const int keep = cfg.init2.regime;
      cfg.init2 = parse_init(value, ctx);
      cfg.init2.regime = keep;
      cfg.has_init2 = true;
    } else if (key == "init2-regime")
      cfg.init2.regime = parse_regime_label(value, ctx);
    else
      throw SimError(ctx.where() + ": unknown key in [sim]");
  } else if (section == "experiment") {
    if (key == "kind") cfg.kind = value;
    else if (key == "rounds")
      cfg.rounds = static_cast<int>(parse_int(value, ctx));
    else if (key == "fit-window") {
      const auto nums = parse_numbers(value, ctx);
      if (nums.size() != 2)
        throw SimError(ctx.where() + ": fit-window needs two times");
      cfg.fit_tmin = nums[0];
      cfg.fit_tmax = nums[1];
      cfg.has_fit_window = true;
    } else if (key == "fit-column") cfg.fit_column = value;
    else if (key == "bound-column") cfg.bound_column = value;
    else if (key == "delta") cfg.delta = parse_double(value, ctx);
    else if (key == "metric") cfg.metric = value;
    else if (key == "assert-slope-max")
      cfg.assert_slope_max = parse_double(value, ctx);
    else if (key == "assert-bound-factor")
      cfg.assert_bound_factor = parse_double(value, ctx);
    else if (key == "assert-bound-times")
      cfg.assert_bound_times = parse_numbers(value, ctx);
    else if (key == "assert-decreasing")
      cfg.assert_decreasing = parse_bool(value, ctx);
    else if (key == "assert-agreement-min")
      cfg.assert_agreement_min = parse_double(value, ctx);
    else if (key == "agreement-time")
      cfg.agreement_time = parse_double(value, ctx);
    else if (key == "assert-ci-excludes-zero")
      cfg.assert_ci_excludes_zero = parse_bool(value, ctx);
    else
      throw SimError(ctx.where() + ": unknown key in [experiment]");
  } else if (section == "output") {
    if (key == "path") cfg.out_path = value;
    else if (key == "snapshot") cfg.snapshot_path = value;
    else if (key == "meta") cfg.meta_path = value;
    else
      throw SimError(ctx.where() + ": unknown key in [output]");
  } else {
    throw SimError(ctx.where() + ": key outside any known section");
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  if (model_name.empty())
    throw SimError("config needs a model name under [model]");
  if (!is_builtin(model_name))
    throw SimError("unknown model '" + model_name +
                   "'; builtins are example1 and example2");
  bool known = false;
  for (const char* k : kKinds) known = known || kind == k;
  if (!known)
    throw SimError("unknown experiment kind '" + kind +
                   "' (moment-decay, contraction, contraction-switching, "
                   "picard, verify, invariant)");
  const bool contraction_like = kind == "contraction" ||
                                kind == "contraction-switching" ||
                                kind == "invariant";
  if (model_name == "example1" && contraction_like &&
      !(beta > -1.0 && beta < 1.0))
    throw SimError("example1 requires beta in (-1, 1) for " + kind +
                   " experiments; got beta = " + fmt6(beta));
  if (q_override && freeze_regime)
    throw SimError("q and freeze-regime cannot both be set");
  sim.validate();
  if (rounds < 1) throw SimError("rounds must be at least 1");
  if (has_fit_window && !(fit_tmin <= fit_tmax))
    throw SimError("fit-window must be an interval");
  if (metric != "w1" && metric != "w2" && metric != "wvtilde" &&
      metric != "wd")
    throw SimError("unknown metric '" + metric +
                   "' (w1, w2, wvtilde, wd)");
  if (out_path.empty()) throw SimError("output path cannot be empty");
}

ExperimentConfig parse_config(const std::string& text,
                              const std::string& origin) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw SimError(origin + ":" + std::to_string(lineno) +
                       ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "model" && section != "sim" && section != "experiment" &&
          section != "output")
        throw SimError(origin + ":" + std::to_string(lineno) +
                       ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw SimError(origin + ":" + std::to_string(lineno) +
                     ": expected key = value");
    KeyCtx ctx{origin, lineno, trim(line.substr(0, eq))};
    apply_key(cfg, section, ctx, trim(line.substr(eq + 1)));
  }
  if (cfg.meta_path.empty()) cfg.meta_path = cfg.out_path + ".meta";
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SimError("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path);
}

namespace {

std::string init_value(const InitSpec& init) {
  std::string s;
  switch (init.kind) {
    case InitSpec::Kind::Point: s = "point"; break;
    case InitSpec::Kind::Uniform: s = "uniform"; break;
    case InitSpec::Kind::Gaussian: s = "gaussian"; break;
  }
  for (std::int64_t k = 0; k < init.a.size(); ++k) s += ' ' + fmt17(init.a[k]);
  if (init.kind != InitSpec::Kind::Point)
    for (std::int64_t k = 0; k < init.b.size(); ++k)
      s += ' ' + fmt17(init.b[k]);
  return s;
}

std::string matrix_value(const Mat& q) {
  std::string s;
  for (std::int64_t i = 0; i < q.rows(); ++i) {
    if (i) s += " ;";
    for (std::int64_t j = 0; j < q.cols(); ++j) s += ' ' + fmt17(q(i, j));
  }
  return trim(s);
}

}  // namespace

std::string echo_config(const ExperimentConfig& cfg,
                        const std::string& command) {
  std::string s;
  s += "# mvx " MVX_VERSION "\n";
  s += "# command: " + command + "\n";
  s += "# seed: " + std::to_string(cfg.sim.seed) + "\n";
  s += "[model]\n";
  s += "name = " + cfg.model_name + "\n";
  s += "beta = " + fmt17(cfg.beta) + "\n";
  if (cfg.q_override) s += "q = " + matrix_value(*cfg.q_override) + "\n";
  if (cfg.freeze_regime)
    s += "freeze-regime = " + std::to_string(*cfg.freeze_regime + 1) + "\n";
  s += "[sim]\n";
  s += "dt = " + fmt17(cfg.sim.dt) + "\n";
  s += "T = " + fmt17(cfg.sim.T) + "\n";
  s += "particles = " + std::to_string(cfg.sim.particles) + "\n";
  s += "seed = " + std::to_string(cfg.sim.seed) + "\n";
  s += "switch-mode = " + switching::to_string(cfg.sim.mode) + "\n";
  s += "trunc = " + fmt17(cfg.sim.trunc) + "\n";
  s += "threads = " + std::to_string(cfg.sim.threads) + "\n";
  s += "record = " + std::to_string(cfg.sim.record_stride) + "\n";
  if (cfg.has_init) {
    s += "init = " + init_value(cfg.init) + "\n";
    s += "init-regime = " + std::to_string(cfg.init.regime + 1) + "\n";
  }
  if (cfg.has_init2) {
    s += "init2 = " + init_value(cfg.init2) + "\n";
    s += "init2-regime = " + std::to_string(cfg.init2.regime + 1) + "\n";
  }
  s += "[experiment]\n";
  s += "kind = " + cfg.kind + "\n";
  s += "rounds = " + std::to_string(cfg.rounds) + "\n";
  if (cfg.has_fit_window)
    s += "fit-window = " + fmt17(cfg.fit_tmin) + " " + fmt17(cfg.fit_tmax) +
         "\n";
  if (!cfg.fit_column.empty()) s += "fit-column = " + cfg.fit_column + "\n";
  s += "bound-column = " + cfg.bound_column + "\n";
  s += "delta = " + fmt17(cfg.delta) + "\n";
  s += "metric = " + cfg.metric + "\n";
  if (cfg.assert_slope_max)
    s += "assert-slope-max = " + fmt17(*cfg.assert_slope_max) + "\n";
  if (cfg.assert_bound_factor)
    s += "assert-bound-factor = " + fmt17(*cfg.assert_bound_factor) + "\n";
  if (!cfg.assert_bound_times.empty()) {
    s += "assert-bound-times =";
    for (double t : cfg.assert_bound_times) s += ' ' + fmt17(t);
    s += "\n";
  }
  s += "assert-decreasing = " + std::string(cfg.assert_decreasing ? "1" : "0") +
       "\n";
  if (cfg.assert_agreement_min) {
    s += "assert-agreement-min = " + fmt17(*cfg.assert_agreement_min) + "\n";
    s += "agreement-time = " + fmt17(cfg.agreement_time) + "\n";
  }
  s += "assert-ci-excludes-zero = " +
       std::string(cfg.assert_ci_excludes_zero ? "1" : "0") + "\n";
  s += "[output]\n";
  s += "path = " + cfg.out_path + "\n";
  if (!cfg.snapshot_path.empty()) s += "snapshot = " + cfg.snapshot_path + "\n";
  s += "meta = " + cfg.meta_path + "\n";
  return s;
}

}  // namespace mvx::cli
