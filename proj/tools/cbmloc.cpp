// cbmloc: dataset generation, training, locality metrics, theorem checks and sweeps.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cbmloc/architectures.hpp"
#include "cbmloc/cbm.hpp"
#include "cbmloc/checkpoint.hpp"
#include "cbmloc/dataset_io.hpp"
#include "cbmloc/harness.hpp"
#include "cbmloc/metrics.hpp"
#include "cbmloc/report_io.hpp"
#include "cbmloc/rng.hpp"
#include "cbmloc/synthgen.hpp"
#include "cbmloc/theory.hpp"
#include "cbmloc/train.hpp"

namespace fs = std::filesystem;
using namespace cbmloc;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitPartial = 3;

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-")
    std::cout << text;
  else
    write_text(out, text);
}

std::string model_id(const CBModel& m) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(m.g().checksum()));
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concept bottleneck locality toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  std::uint64_t seed = 0;
  int workers = 1;
  std::string out;
  app.add_option("--seed", seed, "Random seed");
  app.add_option("--workers", workers, "Parallel workers for sweeps")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "Output file or directory");

  // gen
  SynthConfig synth;
  synth.background = 0.5;
  std::string pgm_dir;
  int pgm_count = 0;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic shapes dataset");
  gen->add_option("--objects", synth.num_objects, "Objects per image (1, 2, 4, 8)");
  gen->add_option("--samples", synth.samples, "Sample count");
  gen->add_option("--side", synth.image_side, "Image side in pixels");
  gen->add_option("--fill", synth.shape_fill, "Shape luminance");
  gen->add_option("--background", synth.background, "Background luminance");
  gen->add_option("--pgm-dir", pgm_dir, "Also export sample images as PGM");
  gen->add_option("--pgm-count", pgm_count, "Number of PGM images to export");

  // train
  std::string data_path;
  std::string family = "cnn";
  std::string variant = "grow";
  int depth = 7;
  int mlp_width = 10;
  TrainConfig tc;
  TrainConfig ltc;
  ltc.epochs = 100;
  ltc.learning_rate = 0.5;
  bool adversarial = false;
  bool residual = false;
  std::string history_path;
  auto* tr = app.add_subcommand("train", "Train a concept bottleneck model");
  tr->add_option("--data", data_path, "Dataset file")->required();
  tr->add_option("--family", family, "cnn or mlp")->check(CLI::IsMember({"cnn", "mlp"}));
  tr->add_option("--variant", variant, "grow, fixed_params or fixed_receptive_field");
  tr->add_option("--depth", depth, "Concept predictor depth");
  tr->add_option("--mlp-width", mlp_width, "Hidden width for MLPs");
  tr->add_option("--epochs", tc.epochs, "Concept predictor epochs");
  tr->add_option("--lr", tc.learning_rate, "Concept predictor learning rate");
  tr->add_option("--batch", tc.batch_size, "Batch size");
  tr->add_option("--weight-decay", tc.weight_decay, "L2 weight decay");
  tr->add_flag("--adversarial", adversarial, "Adversarial training (10 sign steps of 0.05)");
  tr->add_flag("--residual", residual, "Residual connection from x to the label predictor");
  tr->add_option("--label-epochs", ltc.epochs, "Label predictor epochs");
  tr->add_option("--label-lr", ltc.learning_rate, "Label predictor learning rate");
  tr->add_option("--history", history_path, "Write per-epoch history CSV");

  // metrics
  std::string model_path;
  PGDConfig pgd;
  bool json_out = false;
  auto* leak = app.add_subcommand("eval-leakage", "Locality leakage via PGD");
  leak->add_option("--model", model_path, "CBM checkpoint")->required();
  leak->add_option("--data", data_path, "Dataset file")->required();
  leak->add_option("--steps", pgd.steps, "PGD steps");
  leak->add_option("--step-size", pgd.step_size, "PGD step size");
  leak->add_option("--restarts", pgd.restarts, "Restarts (first at x)");
  leak->add_option("--lambda", pgd.penalty_lambda, "Distance penalty");
  leak->add_option("--max-samples", pgd.max_samples, "Evaluate the first N samples (0 = all)");
  leak->add_flag("--json", json_out, "JSON instead of CSV");

  InterventionOptions iopt;
  auto* interv = app.add_subcommand("eval-intervention", "Locality intervention");
  interv->add_option("--model", model_path, "CBM checkpoint")->required();
  interv->add_option("--data", data_path, "Dataset file")->required();
  interv->add_option("--cap", iopt.candidate_cap, "Candidate subsample size (0 = exact)");
  interv->add_flag("--json", json_out, "JSON instead of CSV");

  std::string mask_kind = "zero";
  double eta = 0.0;
  auto* mask = app.add_subcommand("eval-masking", "Relevant and irrelevant masking");
  mask->add_option("--model", model_path, "CBM checkpoint")->required();
  mask->add_option("--data", data_path, "Dataset file")->required();
  mask->add_option("--mask", mask_kind, "zero, mean or constant")->check(CLI::IsMember({"zero", "mean", "constant"}));
  mask->add_option("--eta", eta, "Constant mask value");
  mask->add_flag("--json", json_out, "JSON instead of CSV");

  // theory
  int trials = 1000;
  int kmax = 6;
  double delta = 0.0;
  auto* theo = app.add_subcommand("theory-verify", "Randomized theorem-bound trials (one JSON record per line)");
  theo->add_option("--trials", trials, "Number of valid trials")->check(CLI::PositiveNumber);
  theo->add_option("--kmax", kmax, "Largest k (2..16)");
  theo->add_option("--delta", delta, "Known-concept flip probability");

  // sweep / report
  std::string config_path;
  auto* sweep = app.add_subcommand("sweep", "Run an experiment config");
  sweep->add_option("config", config_path, "Experiment JSON")->required();
  std::string report_dir;
  auto* rep = app.add_subcommand("report", "Plot-ready CSV from a sweep directory");
  rep->add_option("dir", report_dir, "Sweep output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) {
      synth.seed = seed;
      const Dataset ds = generate_dataset(synth);
      save_dataset(ds, out.empty() ? "dataset.cbmds" : out);
      if (!pgm_dir.empty())
        for (int i = 0; i < pgm_count && i < static_cast<int>(ds.size()); ++i)
          write_pgm(ds, static_cast<std::size_t>(i), fs::path(pgm_dir) / ("sample_" + std::to_string(i) + ".pgm"));
      std::cerr << "wrote " << ds.size() << " samples, k=" << ds.k << "\n";
    } else if (*tr) {
      const Dataset ds = load_dataset(data_path);
      tc.seed = seed;
      ltc.seed = seed;
      if (adversarial) tc.adversarial = AdversarialConfig{};
      const NetworkConfig g_cfg =
          family == "mlp" ? make_mlp_config(depth, mlp_width, ds.m, ds.k, seed)
                          : make_depth_sweep_config(depth_variant_from_string(variant), depth, ds.image_side, ds.k, seed);
      CBMTrainResult hist;
      const CBModel model = train_cbm(ds, g_cfg, tc, residual, &hist, &ltc);
      save_cbm(model, out.empty() ? "model.cbm" : out);
      if (!history_path.empty()) write_text(history_path, history_csv(hist.concept_history));
      const Evaluation ev = evaluate(model, ds);
      std::cerr << "train concept_acc " << format_real(ev.concept_accuracy) << " task_acc "
                << format_real(ev.task_accuracy) << "\n";
    } else if (*leak || *interv || *mask) {
      const CBModel model = load_cbm(model_path);
      const Dataset ds = load_dataset(data_path);
      std::vector<MetricReport> reports;
      if (*leak) {
        pgd.seed = seed;
        reports.push_back(locality_leakage(model.g(), ds, ds.locality, pgd));
      } else if (*interv) {
        iopt.seed = seed;
        reports.push_back(locality_intervention(model.g(), ds, iopt));
      } else {
        const MaskingPair mp = locality_masking(model.g(), ds, ds.locality, {mask_kind_from_string(mask_kind), eta});
        reports = {mp.relevant, mp.irrelevant};
      }
      std::string text;
      for (const auto& r : reports) {
        if (json_out) {
          text += metric_report_json(r, seed, model_id(model)) + "\n";
        } else {
          std::string csv = metric_report_csv(r, seed, model_id(model));
          if (!text.empty()) csv = csv.substr(csv.find('\n') + 1);
          text += csv;
        }
      }
      emit(out, text);
    } else if (*theo) {
      std::string text;
      int valid = 0;
      int violated = 0;
      for (std::uint64_t t = 0; valid < trials; ++t) {
        if (t > static_cast<std::uint64_t>(trials) * 50) throw std::runtime_error("too few valid trials");
        const auto rec = theory::run_theorem_trial(derive_seed(seed, t), kmax, delta);
        if (!rec) continue;
        ++valid;
        violated += !rec->satisfied;
        nlohmann::json j = {{"seed", rec->seed},       {"k", rec->k},         {"j", rec->j},
                            {"alpha", rec->alpha},     {"beta", rec->beta},   {"s", rec->s},
                            {"epsilon_hat", rec->epsilon_hat}, {"bound", rec->bound}, {"satisfied", rec->satisfied}};
        if (delta > 0.0) j["delta"] = delta;
        text += j.dump() + "\n";
      }
      emit(out, text);
      std::cerr << valid << " trials, " << violated << " violations\n";
      return violated == 0 ? 0 : 1;
    } else if (*sweep) {
      ExperimentConfig cfg = load_experiment_config(config_path);
      if (app.get_option("--workers")->count()) cfg.workers = workers;
      if (app.get_option("--seed")->count()) cfg.seeds = {seed};
      if (!out.empty()) cfg.output_dir = out;
      const RunResult res =
          run_and_write(cfg, cfg.output_dir, [](const std::string& msg) { std::cerr << msg << std::endl; });
      std::cerr << res.rows.size() << " rows, " << res.failures << " failed\n";
      return res.failures == 0 ? 0 : kExitPartial;
    } else if (*rep) {
      const std::string text = report(report_dir);
      if (!out.empty()) write_text(out, text);
      std::cout << text;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
