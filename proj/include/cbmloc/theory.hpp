#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "cbmloc/synthgen.hpp"

namespace cbmloc::theory {

using ConceptVector = std::vector<std::uint8_t>;

/// Joint distribution over {0,1}^k, either as an explicit probability table
/// (outcome index bit i = c_i, k <= 16) or as an empirical list of vectors.
class JointConceptModel {
 public:
  static JointConceptModel from_table(int k, std::vector<double> table);
  static JointConceptModel from_samples(std::vector<ConceptVector> samples);

  [[nodiscard]] int k() const { return k_; }
  [[nodiscard]] bool is_table() const { return !table_.empty(); }
  [[nodiscard]] const std::vector<double>& table() const { return table_; }
  [[nodiscard]] const std::vector<ConceptVector>& samples() const { return samples_; }

  /// Calls fn(concepts, probability mass) for every outcome with mass.
  template <typename Fn>
  void for_each_outcome(Fn&& fn) const {
    if (is_table()) {
      ConceptVector c(static_cast<std::size_t>(k_));
      for (std::size_t o = 0; o < table_.size(); ++o) {
        if (table_[o] == 0.0) continue;
        for (int i = 0; i < k_; ++i) c[i] = (o >> i) & 1u;
        fn(c, table_[o]);
      }
    } else {
      const double w = 1.0 / static_cast<double>(samples_.size());
      for (const auto& s : samples_) fn(s, w);
    }
  }

 private:
  int k_ = 0;
  std::vector<double> table_;
  std::vector<ConceptVector> samples_;
};

/// Dirichlet(1, ..., 1) table over 2^k outcomes.
JointConceptModel random_joint_table(int k, std::uint64_t seed);

/// M[j,q,i,r] = P[c_j = q | c_i = r] and marginals P[c_i = r]. Conditionals on
/// zero-mass events are undefined.
class CorrelationModel {
 public:
  CorrelationModel() = default;
  CorrelationModel(int k, std::vector<double> cond, std::vector<double> marginal);

  [[nodiscard]] int k() const { return k_; }
  [[nodiscard]] bool defined(int j, int q, int i, int r) const;
  /// Throws std::domain_error when undefined.
  [[nodiscard]] double m(int j, int q, int i, int r) const;
  [[nodiscard]] double marginal(int i, int r) const { return marginal_.at(static_cast<std::size_t>(2 * i + r)); }

 private:
  [[nodiscard]] std::size_t index(int j, int q, int i, int r) const;

  int k_ = 0;
  std::vector<double> cond_;  // NaN where undefined
  std::vector<double> marginal_;
};

CorrelationModel estimate_correlation(const JointConceptModel& model);

/// Empirical correlations of a dataset's concept labels.
CorrelationModel synthetic_correlation_bridge(const Dataset& ds);

struct Triplet {
  int q = 0;
  int i = 0;
  int r = 0;
  double m = 0.0;  // M[j, q, i, r]
  double p = 0.0;  // P[c_i = r]
};

struct TripletSet {
  int j = 0;
  std::vector<int> known;
  double alpha = 0.0;
  double beta = 0.0;
  std::vector<Triplet> triplets;

  [[nodiscard]] std::size_t s() const { return triplets.size(); }
};

/// All (q, i, r) with i known, M >= 1 - alpha and P[c_i = r] >= beta, ordered by
/// descending M, then descending p, then (i, r, q). Throws std::invalid_argument
/// when the set is empty.
TripletSet select_triplets(const CorrelationModel& corr, int j, const std::vector<int>& known, double alpha,
                           double beta);

/// First triplet whose known concept matches r predicts q; otherwise 0.
/// `known_values` maps concept index to its (known) value.
int theorem_predictor(const TripletSet& set, const std::map<int, int>& known_values);

/// Same, reading known values out of a full concept vector.
int theorem_predictor(const TripletSet& set, std::span<const std::uint8_t> concepts);

struct ErrorBound {
  double epsilon_hat = 0.0;
  double bound = 0.0;
  bool satisfied = false;
};

inline constexpr double kBoundSlack = 1e-12;

/// Exact error of theorem_predictor under `model` versus alpha + (1 - beta)^s.
ErrorBound empirical_error(const TripletSet& set, const JointConceptModel& model);

/// Known values are flipped independently with probability delta before
/// prediction; bound alpha + delta + (1 - beta)^s. Exact over flip patterns
/// when at most 12 distinct known concepts are used, otherwise Monte Carlo.
ErrorBound empirical_error_noisy(const TripletSet& set, const JointConceptModel& model, double delta,
                                 std::uint64_t seed = 0, std::size_t mc_draws = 100000);

/// (sum_i p_i prod_{l<i} (1 - p_l), 1 - prod_i (1 - p_i))
std::pair<double, double> lemma_prod_identity(std::span<const double> p);

struct SumBound {
  double lhs = 0.0;
  bool holds = false;  // lhs <= 1 (+1e-12)
};

SumBound lemma_sum_bound(std::span<const double> p);

/// Per-step termination masses p_u prod_{l<u}(1 - p_l) followed by the
/// no-trigger mass prod_u (1 - p_u).
std::vector<double> termination_masses(std::span<const double> p);

struct TrialRecord {
  std::uint64_t seed = 0;
  int k = 0;
  int j = 0;
  double alpha = 0.0;
  double beta = 0.0;
  double delta = 0.0;
  std::size_t s = 0;
  double epsilon_hat = 0.0;
  double bound = 0.0;
  bool satisfied = false;
};

/// One randomized theorem check: k in [2, kmax], Dirichlet table, random target
/// j, random non-empty known set, alpha ~ U(0, 1), beta ~ U(0, 0.6). Returns
/// nullopt when no triplet qualifies.
std::optional<TrialRecord> run_theorem_trial(std::uint64_t seed, int kmax = 6, double delta = 0.0);

}  // namespace cbmloc::theory
