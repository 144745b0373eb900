#include "cbmloc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "cbmloc/checkpoint.hpp"
#include "cbmloc/report_io.hpp"
#include "cbmloc/rng.hpp"
#include "cbmloc/theory.hpp"

namespace cbmloc {

using nlohmann::json;

namespace {

const std::vector<std::pair<ExperimentKind, std::string>> kKindNames = {
    {ExperimentKind::kDepthSweep, "depth_sweep"},
    {ExperimentKind::kFixedParamsSweep, "fixed_params_sweep"},
    {ExperimentKind::kFixedRfSweep, "fixed_rf_sweep"},
    {ExperimentKind::kEpochSweep, "epoch_sweep"},
    {ExperimentKind::kWeightDecaySweep, "weight_decay_sweep"},
    {ExperimentKind::kAdversarialSweep, "adversarial_sweep"},
    {ExperimentKind::kDiversitySweep, "diversity_sweep"},
    {ExperimentKind::kMaskingEval, "masking_eval"},
    {ExperimentKind::kMlpGrid, "mlp_grid"},
    {ExperimentKind::kNoiseSweep, "noise_sweep"},
    {ExperimentKind::kResidualSweep, "residual_sweep"},
    {ExperimentKind::kConstrainedLeakageSweep, "constrained_leakage_sweep"},
    {ExperimentKind::kTheoryVerify, "theory_verify"},
};

const std::set<std::string> kMetricNames = {"leakage", "intervention", "masking"};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// --- JSON <-> config -------------------------------------------------------

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <typename T>
void read(const json& j, const char* key, T& into, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    into = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("invalid value for '" + std::string(key) + "' in " + where);
  }
}

json synth_json(const SynthConfig& s) {
  return {{"num_objects", s.num_objects}, {"image_side", s.image_side}, {"samples", s.samples},
          {"shape_fill", s.shape_fill},   {"background", s.background}, {"seed", s.seed}};
}

void synth_from(const json& j, SynthConfig& s) {
  reject_unknown(j, {"num_objects", "image_side", "samples", "shape_fill", "background", "seed"}, "dataset");
  read(j, "num_objects", s.num_objects, "dataset");
  read(j, "image_side", s.image_side, "dataset");
  read(j, "samples", s.samples, "dataset");
  read(j, "shape_fill", s.shape_fill, "dataset");
  read(j, "background", s.background, "dataset");
  read(j, "seed", s.seed, "dataset");
}

json train_json(const TrainConfig& t) {
  json j = {{"epochs", t.epochs},
            {"learning_rate", t.learning_rate},
            {"batch_size", t.batch_size},
            {"weight_decay", t.weight_decay},
            {"seed", t.seed}};
  if (t.adversarial)
    j["adversarial"] = {{"pgd_steps", t.adversarial->pgd_steps},
                        {"step_size", t.adversarial->step_size},
                        {"loss_weight", t.adversarial->loss_weight}};
  else
    j["adversarial"] = nullptr;
  return j;
}

void train_from(const json& j, TrainConfig& t, const std::string& where) {
  reject_unknown(j, {"epochs", "learning_rate", "batch_size", "weight_decay", "seed", "adversarial"}, where);
  read(j, "epochs", t.epochs, where);
  read(j, "learning_rate", t.learning_rate, where);
  read(j, "batch_size", t.batch_size, where);
  read(j, "weight_decay", t.weight_decay, where);
  read(j, "seed", t.seed, where);
  if (j.contains("adversarial")) {
    const json& a = j.at("adversarial");
    if (a.is_null()) {
      t.adversarial.reset();
    } else {
      AdversarialConfig adv;
      reject_unknown(a, {"pgd_steps", "step_size", "loss_weight"}, where + ".adversarial");
      read(a, "pgd_steps", adv.pgd_steps, where + ".adversarial");
      read(a, "step_size", adv.step_size, where + ".adversarial");
      read(a, "loss_weight", adv.loss_weight, where + ".adversarial");
      t.adversarial = adv;
    }
  }
}

json pgd_json(const PGDConfig& p) {
  return {{"steps", p.steps},         {"step_size", p.step_size}, {"restarts", p.restarts},
          {"penalty_lambda", p.penalty_lambda}, {"seed", p.seed}, {"max_samples", p.max_samples},
          {"batch_columns", p.batch_columns}};
}

void pgd_from(const json& j, PGDConfig& p) {
  reject_unknown(j, {"steps", "step_size", "restarts", "penalty_lambda", "seed", "max_samples", "batch_columns"},
                 "pgd");
  read(j, "steps", p.steps, "pgd");
  read(j, "step_size", p.step_size, "pgd");
  read(j, "restarts", p.restarts, "pgd");
  read(j, "penalty_lambda", p.penalty_lambda, "pgd");
  read(j, "seed", p.seed, "pgd");
  read(j, "max_samples", p.max_samples, "pgd");
  read(j, "batch_columns", p.batch_columns, "pgd");
}

json grid_value_json(const GridValue& g) {
  if (!g.text.empty()) return g.text;
  if (g.numbers.size() == 1) return g.numbers[0];
  return g.numbers;
}

GridValue grid_value_from(const json& j) {
  GridValue g;
  if (j.is_string()) {
    g.text = j.get<std::string>();
    if (g.text.empty()) throw ConfigError("grid strings must be non-empty");
  } else if (j.is_boolean()) {
    g.numbers = {j.get<bool>() ? 1.0 : 0.0};
  } else if (j.is_number()) {
    g.numbers = {j.get<double>()};
  } else if (j.is_array() && !j.empty()) {
    for (const auto& v : j) {
      if (!v.is_number()) throw ConfigError("grid arrays must hold numbers");
      g.numbers.push_back(v.get<double>());
    }
  } else {
    throw ConfigError("grid values must be numbers, booleans, strings or number arrays");
  }
  return g;
}

GridValue num(double v) { return GridValue{{v}, {}}; }

// --- cells -------------------------------------------------------------------

bool is_depth_kind(ExperimentKind k) {
  return k == ExperimentKind::kDepthSweep || k == ExperimentKind::kFixedParamsSweep ||
         k == ExperimentKind::kFixedRfSweep || k == ExperimentKind::kAdversarialSweep;
}

int as_int(double v, const char* what) {
  if (v != std::floor(v)) throw ConfigError(std::string(what) + " must be an integer");
  return static_cast<int>(v);
}

struct CellContext {
  const ExperimentConfig& cfg;
  std::string hash;
};

ResultRow base_row(const CellContext& ctx, const std::string& x, int objects, std::uint64_t seed) {
  ResultRow r;
  r.experiment = to_string(ctx.cfg.kind);
  r.x = x;
  r.num_objects = objects;
  r.seed = seed;
  r.config_hash = ctx.hash;
  r.concept_accuracy = std::numeric_limits<double>::quiet_NaN();
  r.task_accuracy = std::numeric_limits<double>::quiet_NaN();
  return r;
}

PGDConfig cell_pgd(const ExperimentConfig& cfg, const GridValue& x, std::uint64_t seed) {
  PGDConfig p = cfg.pgd;
  p.seed = derive_seed(cfg.pgd.seed, seed, 4);
  if (cfg.kind == ExperimentKind::kConstrainedLeakageSweep) p.penalty_lambda = x.number();
  return p;
}

MaskSpec cell_mask(const ExperimentConfig& cfg, const GridValue& x) {
  if (cfg.kind != ExperimentKind::kMaskingEval) return cfg.mask;
  if (!x.text.empty()) return MaskSpec{mask_kind_from_string(x.text), 0.0};
  return MaskSpec{MaskKind::kConstant, x.number()};
}

void evaluate_metrics(const CellContext& ctx, const GridValue& x, const Network& g, const Dataset& test,
                      std::uint64_t seed, ResultRow base, std::vector<ResultRow>& out) {
  const ExperimentConfig& cfg = ctx.cfg;
  for (const std::string& metric : effective_metrics(cfg)) {
    if (metric == "leakage") {
      const MetricReport rep = locality_leakage(g, test, test.locality, cell_pgd(cfg, x, seed));
      ResultRow r = base;
      r.metric = "leakage";
      r.value = rep.mean;
      r.n_excluded = rep.total_excluded();
      out.push_back(r);
    } else if (metric == "intervention") {
      const MetricReport rep = locality_intervention(g, test);
      ResultRow r = base;
      r.metric = "intervention";
      r.value = rep.mean;
      r.n_excluded = rep.total_excluded();
      out.push_back(r);
    } else if (metric == "masking") {
      const MaskingPair mp = locality_masking(g, test, test.locality, cell_mask(cfg, x));
      for (const MetricReport* rep : {&mp.relevant, &mp.irrelevant}) {
        ResultRow r = base;
        r.metric = rep->metric_name;
        r.value = rep->mean;
        r.n_excluded = rep->total_excluded();
        out.push_back(r);
      }
    }
  }
}

void fill_accuracy(ResultRow& base, const CBModel& model, const Dataset& test) {
  const Evaluation ev = evaluate(model, test);
  base.concept_accuracy = ev.concept_accuracy;
  base.task_accuracy = ev.task_accuracy;
  base.model_checksum = hex64(model.g().checksum());
}

TrainConfig cell_train(const ExperimentConfig& cfg, const GridValue& x, std::uint64_t seed) {
  TrainConfig t = cfg.train;
  t.seed = derive_seed(cfg.train.seed, seed, 5);
  if (cfg.kind == ExperimentKind::kWeightDecaySweep) t.weight_decay = x.number();
  if (cfg.kind == ExperimentKind::kAdversarialSweep && !t.adversarial) t.adversarial = AdversarialConfig{};
  return t;
}

TrainConfig cell_label_train(const ExperimentConfig& cfg, std::uint64_t seed) {
  TrainConfig t = cfg.label_train;
  t.seed = derive_seed(cfg.label_train.seed, seed, 6);
  return t;
}

bool cell_residual(const ExperimentConfig& cfg, const GridValue& x) {
  return cfg.kind == ExperimentKind::kResidualSweep && x.number() != 0.0;
}

std::vector<ResultRow> failed_rows(const CellContext& ctx, const std::vector<GridValue>& xs, int objects,
                                   std::uint64_t seed, const std::string& message) {
  std::vector<ResultRow> rows;
  std::vector<std::string> metrics = effective_metrics(ctx.cfg);
  if (ctx.cfg.kind == ExperimentKind::kTheoryVerify) metrics = {"bound_satisfied_rate", "max_excess"};
  for (const auto& x : xs)
    for (const auto& m : metrics) {
      ResultRow r = base_row(ctx, x.label(), objects, seed);
      r.metric = m;
      r.value = std::numeric_limits<double>::quiet_NaN();
      r.status = "failed";
      r.message = message;
      rows.push_back(r);
    }
  return rows;
}

std::vector<ResultRow> run_theory_cell(const CellContext& ctx, const GridValue& x, std::uint64_t seed) {
  const double delta = x.number();
  std::size_t valid = 0;
  std::size_t skipped = 0;
  std::size_t satisfied = 0;
  double max_excess = -std::numeric_limits<double>::infinity();
  const std::size_t want = static_cast<std::size_t>(ctx.cfg.trials);
  for (std::uint64_t t = 0; valid < want; ++t) {
    if (t >= want * 50) throw std::runtime_error("too few valid theorem trials");
    auto rec = theory::run_theorem_trial(derive_seed(seed, t, 7), 6, delta);
    if (!rec) {
      ++skipped;
      continue;
    }
    ++valid;
    satisfied += rec->satisfied;
    max_excess = std::max(max_excess, rec->epsilon_hat - rec->bound);
  }
  ResultRow base = base_row(ctx, x.label(), 0, seed);
  base.n_excluded = skipped;
  ResultRow rate = base;
  rate.metric = "bound_satisfied_rate";
  rate.value = static_cast<double>(satisfied) / static_cast<double>(valid);
  ResultRow excess = base;
  excess.metric = "max_excess";
  excess.value = max_excess;
  return {rate, excess};
}

std::vector<ResultRow> run_epoch_cell(const CellContext& ctx, int objects, std::uint64_t seed) {
  const ExperimentConfig& cfg = ctx.cfg;
  std::map<int, std::size_t> wanted;
  int max_epoch = 0;
  for (std::size_t i = 0; i < cfg.grid.size(); ++i) {
    const int e = as_int(cfg.grid[i].number(), "epoch grid value");
    wanted[e] = i;
    max_epoch = std::max(max_epoch, e);
  }
  auto [train_ds, test] = cell_datasets(cfg, cfg.grid.front(), objects, seed);
  TrainConfig tc = cell_train(cfg, cfg.grid.front(), seed);
  tc.epochs = max_epoch;
  std::vector<std::vector<ResultRow>> per_x(cfg.grid.size());
  Network g(cell_network_config(cfg, cfg.grid.front(), objects, seed));
  train(g, train_ds, tc, Head::kConcepts, [&](const Network& net, const EpochStats& st) {
    auto it = wanted.find(st.epoch);
    if (it == wanted.end()) return true;
    const GridValue& x = cfg.grid[it->second];
    CBModel model = fit_label_predictor(net, train_ds, cell_label_train(cfg, seed));
    ResultRow base = base_row(ctx, x.label(), objects, seed);
    fill_accuracy(base, model, test);
    evaluate_metrics(ctx, x, model.g(), test, seed, base, per_x[it->second]);
    return true;
  });
  std::vector<ResultRow> rows;
  for (auto& v : per_x) rows.insert(rows.end(), v.begin(), v.end());
  return rows;
}

std::vector<ResultRow> run_cell(const CellContext& ctx, const GridValue& x, int objects, std::uint64_t seed) {
  const ExperimentConfig& cfg = ctx.cfg;
  if (cfg.kind == ExperimentKind::kTheoryVerify) return run_theory_cell(ctx, x, seed);
  auto [train_ds, test] = cell_datasets(cfg, x, objects, seed);
  const TrainConfig tc = cell_train(cfg, x, seed);
  const TrainConfig ltc = cell_label_train(cfg, seed);
  const CBModel model =
      train_cbm(train_ds, cell_network_config(cfg, x, objects, seed), tc, cell_residual(cfg, x), nullptr, &ltc);
  ResultRow base = base_row(ctx, x.label(), objects, seed);
  fill_accuracy(base, model, test);
  std::vector<ResultRow> rows;
  evaluate_metrics(ctx, x, model.g(), test, seed, base, rows);
  return rows;
}

struct Job {
  std::vector<std::size_t> grid_indices;
  int objects = 0;
  std::uint64_t seed = 0;
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_real(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return std::stod(s);
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  throw std::invalid_argument("unknown experiment kind");
}

ExperimentKind experiment_kind_from_string(const std::string& s) {
  for (const auto& [k, name] : kKindNames)
    if (name == s) return k;
  throw ConfigError("unknown experiment kind: " + s);
}

double GridValue::number() const {
  if (numbers.size() != 1) throw ConfigError("grid value '" + label() + "' must be a single number");
  return numbers[0];
}

std::string GridValue::label() const {
  if (!text.empty()) return text;
  std::string out;
  for (std::size_t i = 0; i < numbers.size(); ++i) {
    if (i) out += 'x';
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", numbers[i]);
    out += buf;
  }
  return out;
}

int default_sample_count(int num_objects) { return num_objects <= 2 ? 256 : 1024; }

ExperimentConfig default_experiment_config(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  c.dataset.num_objects = 2;
  c.dataset.samples = 0;
  c.dataset.background = 0.5;
  c.train.epochs = 50;
  c.train.learning_rate = 0.05;
  c.label_train.epochs = 100;
  c.label_train.learning_rate = 0.5;
  c.label_train.batch_size = 32;
  c.pgd.steps = 50;
  c.pgd.max_samples = 32;
  c.model.variant = DepthVariant::kGrow;
  c.model.depth = 7;
  const std::vector<GridValue> depths{num(3), num(4), num(5), num(6), num(7)};
  switch (kind) {
    case ExperimentKind::kDepthSweep:
      c.grid = depths;
      c.objects = {1, 2, 4, 8};
      break;
    case ExperimentKind::kFixedParamsSweep:
    case ExperimentKind::kFixedRfSweep:
    case ExperimentKind::kAdversarialSweep:
      c.grid = depths;
      break;
    case ExperimentKind::kEpochSweep:
      c.grid = {num(5), num(10), num(20), num(30), num(40), num(50)};
      break;
    case ExperimentKind::kWeightDecaySweep:
      c.grid = {num(0.0004), num(0.004), num(0.04)};
      break;
    case ExperimentKind::kDiversitySweep:
      c.grid = {num(0.25), num(0.5), num(0.75), num(1.0)};
      c.objects = {8};
      break;
    case ExperimentKind::kMaskingEval:
      c.grid = {GridValue{{}, "zero"}, GridValue{{}, "mean"}};
      break;
    case ExperimentKind::kMlpGrid:
      // Flattened 0.5-background pixels kill ReLU units at CNN learning rates.
      c.model.family = "mlp";
      c.train.learning_rate = 0.002;
      c.train.epochs = 200;
      for (int d = 1; d <= 3; ++d)
        for (int w : {5, 10, 15}) c.grid.push_back(GridValue{{double(d), double(w)}, {}});
      break;
    case ExperimentKind::kNoiseSweep:
      c.grid = {num(0.0), num(0.05), num(0.1), num(0.2)};
      break;
    case ExperimentKind::kResidualSweep:
      c.grid = {num(0), num(1)};
      break;
    case ExperimentKind::kConstrainedLeakageSweep:
      c.grid = {num(0.0), num(0.001), num(0.01), num(0.1)};
      break;
    case ExperimentKind::kTheoryVerify:
      c.grid = {num(0.0), num(0.05), num(0.1)};
      c.seeds = {0};
      break;
  }
  return c;
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(j, {"schema_version", "kind", "dataset", "test_samples", "objects", "model", "train", "label_train",
                     "pgd", "mask", "metrics", "grid", "seeds", "trials", "workers", "output_dir"},
                 "config");
  if (!j.contains("kind")) throw ConfigError("config requires 'kind'");
  if (!j.contains("schema_version")) throw ConfigError("config requires 'schema_version'");
  int version = 0;
  read(j, "schema_version", version, "config");
  if (version != kSchemaVersion) throw ConfigError("unsupported schema_version " + std::to_string(version));
  std::string kind;
  read(j, "kind", kind, "config");
  ExperimentConfig c = default_experiment_config(experiment_kind_from_string(kind));
  if (j.contains("dataset")) synth_from(j.at("dataset"), c.dataset);
  read(j, "test_samples", c.test_samples, "config");
  read(j, "objects", c.objects, "config");
  if (j.contains("model")) {
    const json& m = j.at("model");
    reject_unknown(m, {"family", "variant", "depth", "mlp_width"}, "model");
    read(m, "family", c.model.family, "model");
    if (m.contains("variant")) {
      try {
        c.model.variant = depth_variant_from_string(m.at("variant").get<std::string>());
      } catch (const std::exception& e) {
        throw ConfigError(std::string("model.variant: ") + e.what());
      }
    }
    read(m, "depth", c.model.depth, "model");
    read(m, "mlp_width", c.model.mlp_width, "model");
  }
  if (j.contains("train")) train_from(j.at("train"), c.train, "train");
  if (j.contains("label_train")) train_from(j.at("label_train"), c.label_train, "label_train");
  if (j.contains("pgd")) pgd_from(j.at("pgd"), c.pgd);
  if (j.contains("mask")) {
    const json& m = j.at("mask");
    reject_unknown(m, {"kind", "eta"}, "mask");
    if (m.contains("kind")) {
      try {
        c.mask.kind = mask_kind_from_string(m.at("kind").get<std::string>());
      } catch (const std::exception& e) {
        throw ConfigError(std::string("mask.kind: ") + e.what());
      }
    }
    read(m, "eta", c.mask.eta, "mask");
  }
  read(j, "metrics", c.metrics, "config");
  if (j.contains("grid")) {
    if (!j.at("grid").is_array()) throw ConfigError("grid must be an array");
    c.grid.clear();
    for (const auto& g : j.at("grid")) c.grid.push_back(grid_value_from(g));
  }
  read(j, "seeds", c.seeds, "config");
  read(j, "trials", c.trials, "config");
  read(j, "workers", c.workers, "config");
  read(j, "output_dir", c.output_dir, "config");
  validate(c);
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

std::string to_json(const ExperimentConfig& c) {
  json grid = json::array();
  for (const auto& g : c.grid) grid.push_back(grid_value_json(g));
  json j = {{"schema_version", c.schema_version},
            {"kind", to_string(c.kind)},
            {"dataset", synth_json(c.dataset)},
            {"test_samples", c.test_samples},
            {"objects", c.objects},
            {"model",
             {{"family", c.model.family},
              {"variant", to_string(c.model.variant)},
              {"depth", c.model.depth},
              {"mlp_width", c.model.mlp_width}}},
            {"train", train_json(c.train)},
            {"label_train", train_json(c.label_train)},
            {"pgd", pgd_json(c.pgd)},
            {"mask", {{"kind", to_string(c.mask.kind)}, {"eta", c.mask.eta}}},
            {"metrics", c.metrics},
            {"grid", grid},
            {"seeds", c.seeds},
            {"trials", c.trials},
            {"workers", c.workers},
            {"output_dir", c.output_dir}};
  return j.dump(2);
}

std::string config_hash(const ExperimentConfig& cfg) {
  // Worker count and output location do not change results.
  ExperimentConfig c = cfg;
  c.workers = 1;
  c.output_dir.clear();
  return hex64(fnv1a(to_json(c)));
}

void validate(const ExperimentConfig& c) {
  if (c.grid.empty()) throw ConfigError("grid must be non-empty");
  if (c.seeds.empty()) throw ConfigError("at least one seed is required");
  if (c.workers < 1) throw ConfigError("workers must be >= 1");
  for (const auto& m : c.metrics)
    if (!kMetricNames.count(m)) throw ConfigError("unknown metric: " + m);
  if (c.kind == ExperimentKind::kTheoryVerify) {
    if (c.trials < 1) throw ConfigError("trials must be >= 1");
    for (const auto& g : c.grid) {
      const double d = g.number();
      if (d < 0.0 || d > 1.0) throw ConfigError("theory_verify grid holds deltas in [0, 1]");
    }
    return;
  }
  try {
    for (int o : effective_objects(c)) {
      SynthConfig s = c.dataset;
      s.num_objects = o;
      if (s.samples == 0) s.samples = default_sample_count(o);
      cbmloc::validate(s);
    }
    validate(c.train);
    validate(c.label_train);
    validate(c.pgd);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (c.test_samples < 0) throw ConfigError("test_samples must be >= 0");
  if (c.model.family != "cnn" && c.model.family != "mlp") throw ConfigError("model.family must be cnn or mlp");
  for (const auto& g : c.grid) {
    if (is_depth_kind(c.kind)) {
      const int d = as_int(g.number(), "depth");
      if (d < 3 || d > 7) throw ConfigError("depth grid values must lie in [3, 7]");
    } else if (c.kind == ExperimentKind::kMlpGrid) {
      if (g.numbers.size() != 2 || g.numbers[0] < 1 || g.numbers[1] < 1)
        throw ConfigError("mlp_grid values are [depth, width] pairs");
      as_int(g.numbers[0], "mlp depth");
      as_int(g.numbers[1], "mlp width");
    } else if (c.kind == ExperimentKind::kEpochSweep) {
      if (as_int(g.number(), "epoch") < 1) throw ConfigError("epoch grid values must be >= 1");
    } else if (c.kind == ExperimentKind::kDiversitySweep) {
      const double f = g.number();
      if (!(f > 0.0) || f > 1.0) throw ConfigError("diversity fractions must lie in (0, 1]");
    } else if (c.kind == ExperimentKind::kMaskingEval) {
      if (!g.text.empty()) {
        try {
          mask_kind_from_string(g.text);
        } catch (const std::exception& e) {
          throw ConfigError(e.what());
        }
      } else {
        static_cast<void>(g.number());
      }
    } else if (c.kind == ExperimentKind::kNoiseSweep || c.kind == ExperimentKind::kWeightDecaySweep ||
               c.kind == ExperimentKind::kConstrainedLeakageSweep) {
      if (g.number() < 0.0) throw ConfigError("grid values must be >= 0");
    } else if (c.kind == ExperimentKind::kResidualSweep) {
      static_cast<void>(g.number());
    }
  }
}

std::vector<std::string> effective_metrics(const ExperimentConfig& cfg) {
  if (!cfg.metrics.empty()) return cfg.metrics;
  switch (cfg.kind) {
    case ExperimentKind::kDiversitySweep:
      return {"intervention"};
    case ExperimentKind::kMaskingEval:
      return {"masking"};
    case ExperimentKind::kTheoryVerify:
      return {};
    default:
      return {"leakage"};
  }
}

std::vector<int> effective_objects(const ExperimentConfig& cfg) {
  if (cfg.kind == ExperimentKind::kTheoryVerify) return {0};
  if (cfg.objects.empty()) return {cfg.dataset.num_objects};
  return cfg.objects;
}

NetworkConfig cell_network_config(const ExperimentConfig& cfg, const GridValue& x, int num_objects,
                                  std::uint64_t seed) {
  const int k = 2 * num_objects;
  const int side = cfg.dataset.image_side;
  const std::uint64_t init = derive_seed(seed, 8);
  switch (cfg.kind) {
    case ExperimentKind::kDepthSweep:
      return make_depth_sweep_config(DepthVariant::kGrow, as_int(x.number(), "depth"), side, k, init);
    case ExperimentKind::kFixedParamsSweep:
      return make_depth_sweep_config(DepthVariant::kFixedParams, as_int(x.number(), "depth"), side, k, init);
    case ExperimentKind::kFixedRfSweep:
      return make_depth_sweep_config(DepthVariant::kFixedReceptiveField, as_int(x.number(), "depth"), side, k, init);
    case ExperimentKind::kAdversarialSweep:
      return make_depth_sweep_config(cfg.model.variant, as_int(x.number(), "depth"), side, k, init);
    case ExperimentKind::kMlpGrid:
      return make_mlp_config(as_int(x.numbers.at(0), "mlp depth"), as_int(x.numbers.at(1), "mlp width"), side * side,
                             k, init);
    default:
      if (cfg.model.family == "mlp") return make_mlp_config(cfg.model.depth, cfg.model.mlp_width, side * side, k, init);
      return make_depth_sweep_config(cfg.model.variant, cfg.model.depth, side, k, init);
  }
}

std::pair<Dataset, Dataset> cell_datasets(const ExperimentConfig& cfg, const GridValue& x, int num_objects,
                                          std::uint64_t seed) {
  SynthConfig s = cfg.dataset;
  s.num_objects = num_objects;
  if (s.samples == 0) s.samples = default_sample_count(num_objects);
  SynthConfig t = s;
  if (cfg.test_samples > 0) t.samples = cfg.test_samples;
  s.seed = derive_seed(cfg.dataset.seed, seed, static_cast<std::uint64_t>(num_objects), 1);
  t.seed = derive_seed(cfg.dataset.seed, seed, static_cast<std::uint64_t>(num_objects), 2);
  Dataset train_ds = generate_dataset(s);
  Dataset test = generate_dataset(t);
  if (cfg.kind == ExperimentKind::kDiversitySweep)
    train_ds = subsample_concept_combinations(train_ds, x.number(), derive_seed(seed, 3));
  if (cfg.kind == ExperimentKind::kNoiseSweep && x.number() > 0.0) {
    train_ds = add_gaussian_noise(train_ds, x.number(), derive_seed(seed, 9, 1));
    test = add_gaussian_noise(test, x.number(), derive_seed(seed, 9, 2));
  }
  return {std::move(train_ds), std::move(test)};
}

RunResult run_experiment(const ExperimentConfig& cfg, const ProgressCallback& progress) {
  validate(cfg);
  const CellContext ctx{cfg, config_hash(cfg)};
  std::vector<Job> jobs;
  if (cfg.kind == ExperimentKind::kEpochSweep) {
    std::vector<std::size_t> all(cfg.grid.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    for (int o : effective_objects(cfg))
      for (auto s : cfg.seeds) jobs.push_back({all, o, s});
  } else {
    for (std::size_t i = 0; i < cfg.grid.size(); ++i)
      for (int o : effective_objects(cfg))
        for (auto s : cfg.seeds) jobs.push_back({{i}, o, s});
  }

  std::vector<std::vector<ResultRow>> results(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;
  auto worker = [&] {
    for (std::size_t idx = next++; idx < jobs.size(); idx = next++) {
      const Job& job = jobs[idx];
      std::vector<GridValue> xs;
      for (auto i : job.grid_indices) xs.push_back(cfg.grid[i]);
      try {
        if (cfg.kind == ExperimentKind::kEpochSweep)
          results[idx] = run_epoch_cell(ctx, job.objects, job.seed);
        else
          results[idx] = run_cell(ctx, xs.front(), job.objects, job.seed);
      } catch (const std::exception& e) {
        results[idx] = failed_rows(ctx, xs, job.objects, job.seed, e.what());
      }
      if (progress) {
        std::lock_guard lock(progress_mutex);
        std::string msg = to_string(cfg.kind) + " x=" + xs.front().label() + " objects=" +
                          std::to_string(job.objects) + " seed=" + std::to_string(job.seed);
        for (const auto& r : results[idx])
          msg += " " + r.metric + "=" + (r.status == "ok" ? format_real(r.value) : "FAILED(" + r.message + ")");
        progress(msg);
      }
    }
  };
  const int n_workers = std::max(1, std::min<int>(cfg.workers, static_cast<int>(jobs.size())));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  RunResult out;
  for (auto& rows : results)
    for (auto& r : rows) {
      out.failures += r.status != "ok";
      out.rows.push_back(std::move(r));
    }
  return out;
}

RunResult run_and_write(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                        const ProgressCallback& progress) {
  RunResult result = run_experiment(cfg, progress);
  std::filesystem::create_directories(out_dir);
  write_text(out_dir / "config.json", to_json(cfg) + "\n");
  write_text(out_dir / "rows.csv", rows_csv(result.rows));
  write_text(out_dir / "summary.json", summary_json(cfg, summarize(result.rows)));
  return result;
}

std::string rows_csv(const std::vector<ResultRow>& rows) {
  std::ostringstream os;
  os << "experiment,x,num_objects,seed,metric,value,n_excluded,concept_acc,task_acc,config_hash,model_checksum,"
        "status,message\n";
  for (const auto& r : rows)
    os << csv_field(r.experiment) << ',' << csv_field(r.x) << ',' << r.num_objects << ',' << r.seed << ','
       << csv_field(r.metric) << ',' << format_real(r.value) << ',' << r.n_excluded << ','
       << format_real(r.concept_accuracy) << ',' << format_real(r.task_accuracy) << ',' << r.config_hash << ','
       << r.model_checksum << ',' << r.status << ',' << csv_field(r.message) << '\n';
  return os.str();
}

std::vector<ResultRow> parse_rows_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("rows.csv is empty");
  const auto header = split_csv_line(line);
  if (header.size() != 13 || header[0] != "experiment") throw std::runtime_error("rows.csv has an unexpected header");
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 13) throw std::runtime_error("rows.csv: malformed row: " + line);
    ResultRow r;
    r.experiment = f[0];
    r.x = f[1];
    r.num_objects = std::stoi(f[2]);
    r.seed = std::stoull(f[3]);
    r.metric = f[4];
    r.value = parse_real(f[5]);
    r.n_excluded = std::stoull(f[6]);
    r.concept_accuracy = parse_real(f[7]);
    r.task_accuracy = parse_real(f[8]);
    r.config_hash = f[9];
    r.model_checksum = f[10];
    r.status = f[11];
    r.message = f[12];
    rows.push_back(r);
  }
  return rows;
}

std::pair<double, double> mean_std(const std::vector<double>& values) {
  if (values.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

std::vector<SummaryEntry> summarize(const std::vector<ResultRow>& rows) {
  std::vector<SummaryEntry> out;
  std::vector<std::vector<double>> values;
  std::map<std::tuple<std::string, int, std::string>, std::size_t> index;
  for (const auto& r : rows) {
    if (r.status != "ok") continue;
    const auto key = std::make_tuple(r.metric, r.num_objects, r.x);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, out.size()).first;
      out.push_back({r.metric, r.num_objects, r.x, 0.0, 0.0, 0});
      values.emplace_back();
    }
    values[it->second].push_back(r.value);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::tie(out[i].mean, out[i].std) = mean_std(values[i]);
    out[i].n = values[i].size();
  }
  return out;
}

std::string summary_json(const ExperimentConfig& cfg, const std::vector<SummaryEntry>& summary) {
  json entries = json::array();
  for (const auto& e : summary)
    entries.push_back(
        {{"metric", e.metric}, {"num_objects", e.num_objects}, {"x", e.x}, {"mean", e.mean}, {"std", e.std}, {"n", e.n}});
  json j = {{"experiment", to_string(cfg.kind)}, {"config_hash", config_hash(cfg)}, {"entries", entries}};
  return j.dump(2) + "\n";
}

std::string report(const std::filesystem::path& dir) {
  const Bytes raw = read_file(dir / "rows.csv");
  const auto rows = parse_rows_csv(std::string(raw.begin(), raw.end()));
  std::ostringstream os;
  os << "series,x,mean,std,n\n";
  for (const auto& e : summarize(rows)) {
    const std::string series = e.metric + (e.num_objects > 0 ? "/objects=" + std::to_string(e.num_objects) : "");
    os << csv_field(series) << ',' << csv_field(e.x) << ',' << format_real(e.mean) << ',' << format_real(e.std) << ','
       << e.n << '\n';
  }
  write_text(dir / "plot.csv", os.str());
  return os.str();
}

}  // namespace cbmloc
