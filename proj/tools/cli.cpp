#include "cli.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tesda/ablation.hpp"
#include "tesda/detector.hpp"
#include "tesda/error.hpp"
#include "tesda/synth.hpp"
#include "tesda/thresholds.hpp"

namespace tesda::cli {
namespace {

using nlohmann::json;

// Accepts TOML (CLI11's reader) or a JSON object whose nested objects map to
// subcommand sections.
class TomlOrJsonConfig : public CLI::ConfigTOML {
 public:
  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    std::string text((std::istreambuf_iterator<char>(input)), std::istreambuf_iterator<char>());
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string::npos || text[first] != '{') {
      std::istringstream toml(text);
      return CLI::ConfigTOML::from_config(toml);
    }
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    std::vector<CLI::ConfigItem> items;
    flatten(doc, {}, items);
    return items;
  }

 private:
  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  static void flatten(const json& obj, std::vector<std::string> parents, std::vector<CLI::ConfigItem>& out) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (it->is_object()) {
        auto nested = parents;
        nested.push_back(it.key());
        flatten(*it, nested, out);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = it.key();
      if (it->is_array()) {
        for (const auto& v : *it) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(*it));
      }
      out.push_back(std::move(item));
    }
  }
};

// Shortest representation that parses back to the same double.
std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

class Log {
 public:
  explicit Log(std::ostream& os) : os_(os) {}

  void operator()(std::initializer_list<std::pair<std::string_view, std::string>> fields) const {
    bool first = true;
    for (const auto& [k, v] : fields) {
      os_ << (first ? "" : " ") << k << '=';
      if (v.find_first_of(" \t\"=") != std::string::npos) {
        os_ << json(v).dump();
      } else {
        os_ << v;
      }
      first = false;
    }
    os_ << '\n';
  }

 private:
  std::ostream& os_;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Rows of named cells written as TSV and as JSON under `key`.
struct Table {
  std::string key;
  std::vector<std::string> columns;
  std::vector<std::vector<json>> rows;

  void write_tsv(std::ostream& os) const {
    for (std::size_t c = 0; c < columns.size(); ++c) os << (c ? "\t" : "") << columns[c];
    os << '\n';
    for (const auto& row : rows) {
      for (std::size_t c = 0; c < row.size(); ++c) {
        os << (c ? "\t" : "");
        const auto& v = row[c];
        if (v.is_string()) {
          os << v.get<std::string>();
        } else if (v.is_number_float()) {
          os << num(v.get<double>());
        } else if (v.is_null()) {
          os << "NA";
        } else {
          os << v.dump();
        }
      }
      os << '\n';
    }
  }

  json to_json() const {
    json arr = json::array();
    for (const auto& row : rows) {
      json obj = json::object();
      for (std::size_t c = 0; c < row.size(); ++c) obj[columns[c]] = row[c];
      arr.push_back(std::move(obj));
    }
    if (key.empty()) return arr.empty() ? json::object() : arr.front();
    return json{{key, arr}};
  }
};

const std::vector<std::string> kReportColumns = {"epsilon", "coverage", "fpr", "precision", "f1", "tp", "fn",
                                                 "fp",      "tn",       "n_clean", "n_attacked"};

std::vector<json> report_cells(const DetectionReport& r) {
  return {r.epsilon,
          r.coverage,
          r.fpr,
          r.precision,
          r.f1,
          r.counts.true_positive,
          r.counts.false_negative,
          r.counts.false_positive,
          r.counts.true_negative,
          r.n_clean(),
          r.n_attacked()};
}

void emit(const Table& table, const std::string& prefix, std::ostream& out, const Log& log) {
  table.write_tsv(out);
  if (prefix.empty()) return;
  const auto tsv_path = prefix + ".tsv";
  const auto json_path = prefix + ".json";
  std::ofstream tsv(tsv_path);
  table.write_tsv(tsv);
  std::ofstream js(json_path);
  js << table.to_json().dump(2) << '\n';
  if (!tsv || !js) throw IoError("cannot write " + prefix + ".{tsv,json}");
  log({{"event", "wrote"}, {"tsv", tsv_path}, {"json", json_path}});
}

struct DetectorFlags {
  std::vector<std::string> layers;
  std::size_t J = 1;
  std::optional<std::size_t> dct_ordinal;
  std::vector<std::string> dct_xy;
  std::optional<std::size_t> pca_index;
  double eps = 0.01;
  std::optional<double> fnr;
  std::optional<double> fpr;
  std::string bound = "empirical";
  std::string mode = "joint";
  std::uint64_t seed = 0;
  std::size_t starts = 500;
  bool raw_mcd = false;
};

void add_detector_flags(CLI::App* sub, DetectorFlags& f) {
  sub->add_option("--layers", f.layers, "Monitored layer ids, in theta order (default: all)")->delimiter(',');
  auto* j = sub->add_option("--J", f.J, "Number of DCT coefficients per channel (zig-zag order)")->check(CLI::PositiveNumber);
  auto* ord = sub->add_option("--dct-ordinal", f.dct_ordinal, "First zig-zag ordinal (default 0 = DC)");
  auto* xy = sub->add_option("--dct-xy", f.dct_xy, "Explicit DCT index X,Y; repeat for several");
  xy->excludes(ord)->excludes(j);
  sub->add_option("--pca-index", f.pca_index, "1-based PCA coefficient (default: lowest energy)")->check(CLI::PositiveNumber);
  auto* eps = sub->add_option("--eps", f.eps, "Outlier fraction epsilon");
  auto* fnr = sub->add_option("--fnr", f.fnr, "Target detection rate tau_N; sets eps = 1 - tau_N");
  auto* fpr = sub->add_option("--fpr", f.fpr, "Target false-positive rate tau_P; sets eps = tau_P");
  fnr->excludes(eps)->excludes(fpr);
  fpr->excludes(eps);
  sub->add_option("--bound", f.bound, "Threshold source")
      ->check(CLI::IsMember({"empirical", "chebyshev", "subexponential", "chernoff"}));
  sub->add_option("--mode", f.mode, "Envelope combination")->check(CLI::IsMember({"joint", "or"}));
  sub->add_option("--seed", f.seed, "MCD start seed");
  sub->add_option("--mcd-starts", f.starts, "Random MCD starts")->check(CLI::PositiveNumber);
  sub->add_flag("--raw-mcd", f.raw_mcd, "Skip the MCD reweighting step");
}

DetectorConfig build_config(const DetectorFlags& f, const std::vector<LayerSpec>& layers, unsigned threads) {
  DetectorConfig c;
  c.layers = f.layers;
  if (!f.dct_xy.empty()) {
    std::vector<CoefficientIndex> idx;
    for (const auto& s : f.dct_xy) {
      std::size_t x = 0, y = 0;
      char tail = 0;
      if (std::sscanf(s.c_str(), "%zu,%zu%c", &x, &y, &tail) != 2) {
        throw ValidationError("--dct-xy expects X,Y, got \"" + s + "\"");
      }
      idx.push_back({x, y});
    }
    c.dct = DctSelection(std::move(idx));
  } else {
    bool any_conv = false;
    for (const auto& l : layers) {
      const bool monitored = c.layers.empty() || std::find(c.layers.begin(), c.layers.end(), l.id) != c.layers.end();
      any_conv = any_conv || (monitored && l.kind == LayerKind::conv);
    }
    const std::size_t first = f.dct_ordinal.value_or(0);
    if (any_conv) {
      const auto [rows, cols] = common_dct_grid(c, layers);
      if (first + f.J > rows * cols) {
        throw ValidationError("zig-zag ordinals " + std::to_string(first) + ".." + std::to_string(first + f.J - 1) +
                              " exceed the " + std::to_string(rows) + "x" + std::to_string(cols) + " map");
      }
      c.dct = DctSelection::zigzag(first, f.J, rows, cols);
    } else if (first != 0 || f.J != 1) {
      throw ValidationError("DCT selection needs a monitored conv layer");
    }
  }
  if (f.pca_index) c.pca_coefficient = CoefficientChoice::one_based(*f.pca_index);
  if (f.fnr) {
    c.epsilon = epsilon_for_target({ErrorRateTarget::Kind::fnr, *f.fnr});
  } else if (f.fpr) {
    c.epsilon = epsilon_for_target({ErrorRateTarget::Kind::fpr, *f.fpr});
  } else {
    c.epsilon = f.eps;
  }
  c.threshold = threshold_method_from_string(f.bound);
  c.mode = combine_mode_from_string(f.mode);
  c.seed = f.seed;
  c.mcd_starts = f.starts;
  c.mcd_reweight = !f.raw_mcd;
  c.threads = threads;
  c.validate();
  return c;
}

void log_fit(const Log& log, const FitResult& fit, double seconds) {
  const auto& det = fit.detector;
  for (const auto& w : fit.warnings) log({{"level", "warn"}, {"message", w}});
  for (std::size_t g = 0; g < det.groups().size(); ++g) {
    const auto& grp = det.groups()[g];
    log({{"event", "envelope"},
         {"group", std::to_string(g)},
         {"dct_row", std::to_string(grp.dct_row)},
         {"k", std::to_string(grp.components.size())},
         {"delta_sq", num(grp.envelope.delta_sq().value_or(0.0))},
         {"mcd_best_start", std::to_string(fit.mcd[g].best_start)},
         {"mcd_reweighted", std::to_string(fit.mcd[g].reweighted_count)}});
  }
  log({{"event", "fit"},
       {"n_train", std::to_string(det.provenance().n_train)},
       {"theta_dim", std::to_string(det.theta_dim())},
       {"groups", std::to_string(det.groups().size())},
       {"dropped", std::to_string(det.dropped().size())},
       {"seconds", num(seconds)}});
}

SyntheticLayer parse_layer_flag(const std::string& s) {
  // id:conv:MxLxK or id:dense:M
  const auto a = s.find(':');
  const auto b = a == std::string::npos ? a : s.find(':', a + 1);
  if (b == std::string::npos) throw ValidationError("--layer expects id:conv:MxLxK or id:dense:M, got \"" + s + "\"");
  SyntheticLayer l;
  l.id = s.substr(0, a);
  l.kind = layer_kind_from_string(s.substr(a + 1, b - a - 1));
  const auto dims = s.substr(b + 1);
  std::size_t m = 0, h = 0, w = 0;
  char tail = 0;
  if (l.kind == LayerKind::conv) {
    if (std::sscanf(dims.c_str(), "%zux%zux%zu%c", &m, &h, &w, &tail) != 3) {
      throw ValidationError("conv layer dims must be MxLxK, got \"" + dims + "\"");
    }
    l.shape = {m, h, w};
  } else {
    if (std::sscanf(dims.c_str(), "%zu%c", &m, &tail) != 1) throw ValidationError("dense layer dims must be M, got \"" + dims + "\"");
    l.shape = {m, 1, 1};
  }
  return l;
}

struct SynthFlags {
  std::string out;
  std::vector<std::string> layers = {"block1:conv:8x8x8", "block2:conv:8x8x8"};
  std::size_t n_train = 1000, n_test = 1000, n_attacked = 1000;
  std::string attack = "mean-shift";
  std::vector<std::string> attack_layers;
  std::string direction = "pca-lowest";
  double magnitude = 5.0;
  std::size_t ordinal = 0;
  double factor = 2.0;
  double rho = 0.5;
  std::uint64_t seed = 0;
};

SyntheticSpec build_synth_spec(const SynthFlags& f) {
  SyntheticSpec spec;
  for (const auto& s : f.layers) spec.layers.push_back(parse_layer_flag(s));
  spec.n_train = f.n_train;
  spec.n_test = f.n_test;
  spec.n_attacked = f.n_attacked;
  spec.seed = f.seed;
  spec.rho = f.rho;
  const auto single_layer = [&]() {
    if (f.attack_layers.size() > 1) throw ValidationError("--attack " + f.attack + " takes one --attack-layer");
    return f.attack_layers.empty() ? spec.layers.front().id : f.attack_layers.front();
  };
  if (f.attack == "mean-shift") {
    MeanShift a;
    a.layers = f.attack_layers;
    a.direction = f.direction == "random" ? ShiftDirection::random : ShiftDirection::pca_lowest;
    a.magnitude = f.magnitude;
    a.dct_ordinal = f.ordinal;
    spec.attack = a;
  } else if (f.attack == "variance-scale") {
    spec.attack = VarianceScale{single_layer(), f.factor};
  } else {
    spec.attack = FrequencyInject{single_layer(), f.ordinal, f.magnitude};
  }
  spec.validate();
  return spec;
}

std::vector<std::size_t> parse_ordinals(const std::vector<std::string>& items) {
  std::vector<std::size_t> out;
  for (const auto& s : items) {
    std::size_t a = 0, b = 0;
    char tail = 0;
    if (std::sscanf(s.c_str(), "%zu-%zu%c", &a, &b, &tail) == 2) {
      if (b < a) throw ValidationError("bad ordinal range \"" + s + "\"");
      for (std::size_t i = a; i <= b; ++i) out.push_back(i);
    } else if (std::sscanf(s.c_str(), "%zu%c", &a, &tail) == 1) {
      out.push_back(a);
    } else {
      throw ValidationError("bad ordinal \"" + s + "\" (expected N or A-B)");
    }
  }
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const Log log(err);
  CLI::App app{"Activation-statistics attack detector: DCT, PCA and robust elliptic envelopes"};
  app.name(args.empty() ? "tesda" : args.front());
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML or JSON file with option defaults; command-line flags win");
  app.config_formatter(std::make_shared<TomlOrJsonConfig>());
  unsigned threads = 1;
  auto* threads_opt = app.add_option("--threads", threads, "Worker threads (default $TESDA_THREADS or 1; results do not depend on it)")
                          ->check(CLI::Range(1u, 1024u));

  SynthFlags synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic clean/attacked dataset");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--layer", synth.layers, "Layer as id:conv:MxLxK or id:dense:M; repeat for several");
  synth_cmd->add_option("--n-train", synth.n_train)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--n-test", synth.n_test);
  synth_cmd->add_option("--n-attacked", synth.n_attacked);
  synth_cmd->add_option("--attack", synth.attack)->check(CLI::IsMember({"mean-shift", "variance-scale", "frequency-inject"}));
  synth_cmd->add_option("--attack-layer", synth.attack_layers, "Attacked layer id(s) (default: all for mean-shift)");
  synth_cmd->add_option("--direction", synth.direction)->check(CLI::IsMember({"pca-lowest", "random"}));
  synth_cmd->add_option("--magnitude", synth.magnitude, "Shift size in clean standard deviations")->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--ordinal", synth.ordinal, "Zig-zag DCT ordinal the shift lands in");
  synth_cmd->add_option("--factor", synth.factor, "variance-scale factor")->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--rho", synth.rho, "AR(1) spatial correlation");
  synth_cmd->add_option("--seed", synth.seed);

  DetectorFlags fit_flags;
  std::string fit_train, fit_det;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a detector on a clean-train manifest");
  fit_cmd->add_option("--train", fit_train, "clean-train manifest")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--det", fit_det, "Output model file")->required();
  add_detector_flags(fit_cmd, fit_flags);

  std::string score_det, score_data, score_out;
  auto* score_cmd = app.add_subcommand("score", "Score every sample of a manifest");
  score_cmd->add_option("--det", score_det)->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--data", score_data, "Manifest to score")->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--out", score_out, "Write PREFIX.tsv and PREFIX.json");

  std::string eval_det, eval_clean, eval_attacked, eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "Coverage, FPR and F1 of a fitted detector");
  eval_cmd->add_option("--det", eval_det)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--clean", eval_clean, "clean-test manifest")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--attacked", eval_attacked, "attacked manifest")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", eval_out, "Write PREFIX.tsv and PREFIX.json");

  struct AblateArgs {
    std::string train, clean, attacked, out;
    DetectorFlags flags;
  };
  auto add_ablate = [&](const char* name, const char* help, AblateArgs& a) {
    auto* cmd = app.add_subcommand(name, help);
    cmd->add_option("--train", a.train)->required()->check(CLI::ExistingFile);
    cmd->add_option("--clean", a.clean)->required()->check(CLI::ExistingFile);
    cmd->add_option("--attacked", a.attacked)->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", a.out, "Write PREFIX.tsv and PREFIX.json");
    add_detector_flags(cmd, a.flags);
    return cmd;
  };
  AblateArgs layers_args, eps_args, dct_args;
  auto* layers_cmd = add_ablate("ablate-layers", "One single-layer detector per layer", layers_args);
  auto* eps_cmd = add_ablate("ablate-eps", "Sweep epsilon with a single fit", eps_args);
  std::vector<double> eps_list = {0.004, 0.01, 0.02, 0.04};
  eps_cmd->add_option("--eps-list", eps_list, "Epsilons to sweep")->delimiter(',');
  auto* dct_cmd = add_ablate("ablate-dct", "Refit at each single zig-zag DCT ordinal", dct_args);
  std::vector<std::string> ordinal_items = {"0-9"};
  dct_cmd->add_option("--ordinals", ordinal_items, "Ordinals, e.g. 0-9 or 0,3,5")->delimiter(',');

  std::size_t bounds_k = 2, bounds_n = 100000, bounds_draws = 1000000;
  double bounds_eps = 0.01;
  std::uint64_t bounds_seed = 0;
  std::string bounds_out;
  auto* bounds_cmd = app.add_subcommand("bounds", "Compare tail-bound thresholds for one (k, n, eps)");
  bounds_cmd->add_option("--k", bounds_k, "theta dimension")->check(CLI::PositiveNumber);
  bounds_cmd->add_option("--n", bounds_n, "Training size (Chebyshev)")->check(CLI::PositiveNumber);
  bounds_cmd->add_option("--eps", bounds_eps);
  bounds_cmd->add_option("--mc-draws", bounds_draws, "Monte Carlo draws per row (0 disables)");
  bounds_cmd->add_option("--seed", bounds_seed);
  bounds_cmd->add_option("--out", bounds_out, "Write PREFIX.tsv and PREFIX.json");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  if (argv.empty()) argv.push_back("tesda");
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? ok : usage;
  }
  // CLI11 silently skips environment values that fail validation; reject them instead.
  if (const char* env = std::getenv("TESDA_THREADS"); env != nullptr && threads_opt->count() == 0) {
    const std::string_view text(env);
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), threads);
    if (ec != std::errc{} || end != text.data() + text.size() || threads < 1 || threads > 1024) {
      err << "TESDA_THREADS must be an integer in [1, 1024], got \"" << env << "\"\n";
      return usage;
    }
  }

  const auto start = std::chrono::steady_clock::now();
  try {
    if (synth_cmd->parsed()) {
      const auto spec = build_synth_spec(synth);
      const auto paths = generate(spec, synth.out, threads);
      log({{"event", "synth"},
           {"train", paths.train.string()},
           {"clean", paths.clean_test.string()},
           {"attacked", paths.attacked.string()},
           {"seconds", num(seconds_since(start))}});
      out << paths.train.string() << '\n' << paths.clean_test.string() << '\n' << paths.attacked.string() << '\n';
    } else if (fit_cmd->parsed()) {
      const auto manifest = load_manifest(fit_train);
      const auto config = build_config(fit_flags, manifest.layers, threads);
      auto fitted = fit_detailed(config, load_dataset(manifest, threads));
      log_fit(log, fitted, seconds_since(start));
      auto prov = fitted.detector.provenance();
      prov.fit_timestamp = static_cast<std::int64_t>(std::time(nullptr));
      const FittedDetector stamped(fitted.detector.config(), fitted.detector.layers(), fitted.detector.components(),
                                   fitted.detector.groups(), fitted.detector.dropped(), prov);
      save(stamped, fit_det);
      log({{"event", "saved"}, {"det", fit_det}});
    } else if (score_cmd->parsed()) {
      const auto det = load(score_det);
      const auto verdicts = score_dataset(det, load_dataset(load_manifest(score_data), threads));
      Table t{"samples", {"sample_id", "is_attack"}, {}};
      for (std::size_t g = 0; g < det.groups().size(); ++g) t.columns.push_back("d_sq_" + std::to_string(g));
      std::size_t flagged = 0;
      for (const auto& v : verdicts) {
        std::vector<json> row = {v.sample_id, v.is_attack ? 1 : 0};
        for (double d : v.d_sq) row.emplace_back(d);
        t.rows.push_back(std::move(row));
        flagged += v.is_attack ? 1 : 0;
      }
      emit(t, score_out, out, log);
      log({{"event", "score"}, {"samples", std::to_string(verdicts.size())}, {"flagged", std::to_string(flagged)},
           {"seconds", num(seconds_since(start))}});
    } else if (eval_cmd->parsed()) {
      const auto det = load(eval_det);
      const auto report = evaluate(det, load_dataset(load_manifest(eval_clean), threads),
                                   load_dataset(load_manifest(eval_attacked), threads));
      emit(Table{"", kReportColumns, {report_cells(report)}}, eval_out, out, log);
      log({{"event", "eval"}, {"coverage", num(report.coverage)}, {"fpr", num(report.fpr)},
           {"seconds", num(seconds_since(start))}});
    } else if (layers_cmd->parsed() || eps_cmd->parsed() || dct_cmd->parsed()) {
      auto& a = layers_cmd->parsed() ? layers_args : eps_cmd->parsed() ? eps_args : dct_args;
      const auto train = load_manifest(a.train);
      const auto config = build_config(a.flags, train.layers, threads);
      const auto data = load_ablation_data(train, load_manifest(a.clean), load_manifest(a.attacked), threads);
      Table t;
      if (layers_cmd->parsed()) {
        t.key = "per_layer";
        t.columns = {"layer"};
        for (const auto& row : ablate_layers(config, data)) {
          auto cells = report_cells(row.report);
          cells.insert(cells.begin(), row.layer_id);
          t.rows.push_back(std::move(cells));
        }
      } else if (eps_cmd->parsed()) {
        t.key = "per_epsilon";
        for (const auto& r : ablate_thresholds(config, data, eps_list)) t.rows.push_back(report_cells(r));
      } else {
        t.key = "per_ordinal";
        t.columns = {"ordinal", "x", "y"};
        for (const auto& row : ablate_dct(config, data, parse_ordinals(ordinal_items))) {
          auto cells = report_cells(row.report);
          cells.insert(cells.begin(), {row.ordinal, row.index.x, row.index.y});
          t.rows.push_back(std::move(cells));
        }
      }
      t.columns.insert(t.columns.end(), kReportColumns.begin(), kReportColumns.end());
      emit(t, a.out, out, log);
      log({{"event", "ablate"}, {"rows", std::to_string(t.rows.size())}, {"seconds", num(seconds_since(start))}});
    } else if (bounds_cmd->parsed()) {
      Table t{"bounds", {"kind", "delta", "delta_sq", "branch_note", "mc_tail_estimate", "mc_standard_error"}, {}};
      auto add_row = [&](const std::string& kind, std::optional<double> delta_sq, const std::string& note) {
        std::vector<json> row = {kind};
        if (delta_sq) {
          row.insert(row.end(), {std::sqrt(*delta_sq), *delta_sq, note});
          if (bounds_draws > 0) {
            const auto mc = chi2_tail_mc(bounds_k, *delta_sq, bounds_draws, bounds_seed);
            row.insert(row.end(), {mc.estimate, mc.standard_error});
          } else {
            row.insert(row.end(), {nullptr, nullptr});
          }
        } else {
          row.insert(row.end(), {nullptr, nullptr, note, nullptr, nullptr});
        }
        t.rows.push_back(std::move(row));
      };
      for (const auto& r : compare_bounds(bounds_k, bounds_n, bounds_eps)) {
        if (r.result) {
          add_row(to_string(r.kind), r.result->delta_sq, r.result->branch_note);
        } else {
          add_row(to_string(r.kind), std::nullopt, "error: " + r.error);
        }
      }
      add_row("exact", chi2_quantile(bounds_k, 1.0 - bounds_eps), "chi2_k quantile at 1 - eps");
      emit(t, bounds_out, out, log);
    }
  } catch (const NumericalError& e) {
    log({{"level", "error"}, {"kind", "numerical"}, {"message", e.what()}});
    return numerical_error;
  } catch (const Error& e) {
    log({{"level", "error"}, {"kind", "data"}, {"message", e.what()}});
    return data_error;
  } catch (const std::exception& e) {
    log({{"level", "error"}, {"kind", "data"}, {"message", e.what()}});
    return data_error;
  }
  return ok;
}

}  // namespace tesda::cli
