#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cbmloc/nnet.hpp"
#include "cbmloc/synthgen.hpp"

namespace cbmloc {

struct PGDConfig {
  int steps = 100;
  double step_size = 0.05;
  int restarts = 3;  // restart 0 starts at x, the rest uniformly at random outside the region
  double penalty_lambda = 0.0;
  std::uint64_t seed = 0;
  /// Evaluate only the first `max_samples` samples (0 = all).
  std::size_t max_samples = 0;
  /// Columns per forward/backward batch.
  int batch_columns = 64;
};

void validate(const PGDConfig& cfg);

enum class MaskKind { kZero, kMean, kConstant };

struct MaskSpec {
  MaskKind kind = MaskKind::kZero;
  double eta = 0.0;
};

std::string to_string(MaskKind kind);
MaskKind mask_kind_from_string(const std::string& s);

struct SampleRecord {
  std::size_t sample = 0;
  int concept_index = 0;
  double value = 0.0;
  /// Intervention: witness sample index. Leakage: FNV-1a hash of the best
  /// adversarial input. Masking: unused (-1).
  std::int64_t witness = -1;
};

struct MetricReport {
  std::string metric_name;
  std::vector<double> per_concept;
  double mean = 0.0;
  std::vector<std::size_t> n_samples;   // contributing samples per concept
  std::vector<std::size_t> n_excluded;  // excluded (sample, concept) pairs per concept
  std::vector<SampleRecord> records;    // one per contributing (sample, concept)

  [[nodiscard]] std::size_t total_excluded() const;
};

/// Rebuilds per_concept / mean / counts from `records` (fixed index order).
void finalize_report(MetricReport& report, int k);

/// Observer invoked with every PGD iterate (after projection): sample, concept,
/// restart, step, iterate.
using PgdObserver = std::function<void(std::size_t, int, int, int, const Vector&)>;

MetricReport locality_leakage(const Network& g, const Dataset& ds, const LocalityMap& map, const PGDConfig& pgd,
                              const PgdObserver& observer = {});

struct InterventionOptions {
  /// When > 0 and a candidate pool is larger, scan a uniform subsample of this size.
  std::size_t candidate_cap = 0;
  std::uint64_t seed = 0;
};

MetricReport locality_intervention(const Network& g, const Dataset& ds, const InterventionOptions& opt = {});

/// Same metric from precomputed concept probabilities (k x n).
MetricReport locality_intervention(const Matrix& probs, const Dataset& ds, const InterventionOptions& opt = {});

Vector apply_mask(const Vector& x, const std::vector<std::uint32_t>& region, const MaskSpec& mask,
                  const std::vector<double>& feature_means);

MetricReport relevant_masking(const Network& g, const Dataset& ds, const LocalityMap& map, const MaskSpec& mask);
MetricReport irrelevant_masking(const Network& g, const Dataset& ds, const LocalityMap& map, const MaskSpec& mask);

struct MaskingPair {
  MetricReport relevant;
  MetricReport irrelevant;
};

/// Both masking metrics from one pass (one masked forward per region per sample).
MaskingPair locality_masking(const Network& g, const Dataset& ds, const LocalityMap& map, const MaskSpec& mask);

struct ConfidenceSweepRow {
  double radius_fraction = 0.0;
  std::size_t confident = 0;
  std::size_t changed = 0;
  double change_rate = 0.0;
};

/// For each radius, masks each concept's dilated region and reports the
/// fraction of confident (max(p, 1-p) >= threshold) clean predictions whose
/// 0.5-thresholded decision flips.
std::vector<ConfidenceSweepRow> masked_confidence_sweep(const Network& g, const Dataset& ds, const LocalityMap& map,
                                                        const std::vector<double>& radii, double confidence_threshold,
                                                        const MaskSpec& mask);

/// Concept decision: p > 0.5 (ties to 0).
inline int concept_decision(double p) { return p > 0.5 ? 1 : 0; }

}  // namespace cbmloc
