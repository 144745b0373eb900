#include "cbmloc/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace cbmloc::theory {

JointConceptModel JointConceptModel::from_table(int k, std::vector<double> table) {
  if (k < 1 || k > 16) throw std::invalid_argument("explicit tables support 1 <= k <= 16");
  if (table.size() != (std::size_t{1} << k)) throw std::invalid_argument("table size must be 2^k");
  double total = 0.0;
  for (double v : table) {
    if (!(v >= 0.0)) throw std::invalid_argument("table masses must be non-negative");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("table must sum to 1");
  JointConceptModel m;
  m.k_ = k;
  m.table_ = std::move(table);
  return m;
}

JointConceptModel JointConceptModel::from_samples(std::vector<ConceptVector> samples) {
  if (samples.empty()) throw std::invalid_argument("sample list must be non-empty");
  const std::size_t k = samples.front().size();
  if (k == 0) throw std::invalid_argument("concept vectors must be non-empty");
  for (const auto& s : samples)
    if (s.size() != k) throw std::invalid_argument("concept vectors differ in length");
  JointConceptModel m;
  m.k_ = static_cast<int>(k);
  m.samples_ = std::move(samples);
  return m;
}

JointConceptModel random_joint_table(int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> e(1.0);
  std::vector<double> t(std::size_t{1} << k);
  double total = 0.0;
  for (double& v : t) total += (v = e(rng));
  for (double& v : t) v /= total;
  // Renormalise once more so the sum is within rounding of 1.
  double again = 0.0;
  for (double v : t) again += v;
  for (double& v : t) v /= again;
  return JointConceptModel::from_table(k, std::move(t));
}

CorrelationModel::CorrelationModel(int k, std::vector<double> cond, std::vector<double> marginal)
    : k_(k), cond_(std::move(cond)), marginal_(std::move(marginal)) {}

std::size_t CorrelationModel::index(int j, int q, int i, int r) const {
  if (j < 0 || j >= k_ || i < 0 || i >= k_ || (q | r) & ~1) throw std::out_of_range("correlation index");
  return ((static_cast<std::size_t>(j) * 2 + q) * k_ + i) * 2 + r;
}

bool CorrelationModel::defined(int j, int q, int i, int r) const { return !std::isnan(cond_[index(j, q, i, r)]); }

double CorrelationModel::m(int j, int q, int i, int r) const {
  const double v = cond_[index(j, q, i, r)];
  if (std::isnan(v)) throw std::domain_error("conditional on a zero-probability event");
  return v;
}

CorrelationModel estimate_correlation(const JointConceptModel& model) {
  const int k = model.k();
  std::vector<double> marginal(2 * static_cast<std::size_t>(k), 0.0);
  std::vector<double> joint(4 * static_cast<std::size_t>(k) * k, 0.0);  // [j][q][i][r]
  model.for_each_outcome([&](const ConceptVector& c, double w) {
    for (int i = 0; i < k; ++i) {
      marginal[2 * i + c[i]] += w;
      for (int j = 0; j < k; ++j) joint[((static_cast<std::size_t>(j) * 2 + c[j]) * k + i) * 2 + c[i]] += w;
    }
  });
  std::vector<double> cond(joint.size(), std::numeric_limits<double>::quiet_NaN());
  for (int j = 0; j < k; ++j)
    for (int q = 0; q < 2; ++q)
      for (int i = 0; i < k; ++i)
        for (int r = 0; r < 2; ++r) {
          const double pr = marginal[2 * i + r];
          if (pr > 0.0) {
            const std::size_t id = ((static_cast<std::size_t>(j) * 2 + q) * k + i) * 2 + r;
            cond[id] = joint[id] / pr;
          }
        }
  return {k, std::move(cond), std::move(marginal)};
}

CorrelationModel synthetic_correlation_bridge(const Dataset& ds) {
  std::vector<ConceptVector> rows;
  rows.reserve(ds.size());
  for (const auto& s : ds.samples) rows.push_back(s.concepts);
  return estimate_correlation(JointConceptModel::from_samples(std::move(rows)));
}

TripletSet select_triplets(const CorrelationModel& corr, int j, const std::vector<int>& known, double alpha,
                           double beta) {
  if (alpha < 0.0 || alpha > 1.0 || beta < 0.0 || beta > 1.0)
    throw std::invalid_argument("alpha and beta must lie in [0, 1]");
  if (j < 0 || j >= corr.k()) throw std::invalid_argument("target concept out of range");
  TripletSet set;
  set.j = j;
  set.known = known;
  std::sort(set.known.begin(), set.known.end());
  set.known.erase(std::unique(set.known.begin(), set.known.end()), set.known.end());
  set.alpha = alpha;
  set.beta = beta;
  for (int i : set.known) {
    if (i == j) throw std::invalid_argument("target concept cannot be in the known set");
    if (i < 0 || i >= corr.k()) throw std::invalid_argument("known concept out of range");
    for (int r = 0; r < 2; ++r)
      for (int q = 0; q < 2; ++q) {
        if (!corr.defined(j, q, i, r)) continue;
        const double mv = corr.m(j, q, i, r);
        const double p = corr.marginal(i, r);
        if (mv >= 1.0 - alpha && p >= beta) set.triplets.push_back({q, i, r, mv, p});
      }
  }
  if (set.triplets.empty()) throw std::invalid_argument("no triplet satisfies the alpha/beta bounds");
  std::stable_sort(set.triplets.begin(), set.triplets.end(), [](const Triplet& a, const Triplet& b) {
    if (a.m != b.m) return a.m > b.m;
    if (a.p != b.p) return a.p > b.p;
    if (a.i != b.i) return a.i < b.i;
    if (a.r != b.r) return a.r < b.r;
    return a.q < b.q;
  });
  return set;
}

int theorem_predictor(const TripletSet& set, const std::map<int, int>& known_values) {
  for (const Triplet& t : set.triplets) {
    auto it = known_values.find(t.i);
    if (it == known_values.end())
      throw std::invalid_argument("missing known value for concept " + std::to_string(t.i));
  }
  for (const Triplet& t : set.triplets)
    if (known_values.at(t.i) == t.r) return t.q;
  return 0;
}

int theorem_predictor(const TripletSet& set, std::span<const std::uint8_t> concepts) {
  for (const Triplet& t : set.triplets) {
    if (t.i >= static_cast<int>(concepts.size())) throw std::invalid_argument("concept vector too short");
    if (concepts[t.i] == t.r) return t.q;
  }
  return 0;
}

namespace {

double bound_value(const TripletSet& set, double delta) {
  return set.alpha + delta + std::pow(1.0 - set.beta, static_cast<double>(set.s()));
}

void require_nonempty(const TripletSet& set) {
  if (set.triplets.empty()) throw std::invalid_argument("triplet set must be non-empty (s >= 1)");
}

}  // namespace

ErrorBound empirical_error(const TripletSet& set, const JointConceptModel& model) {
  require_nonempty(set);
  ErrorBound eb;
  model.for_each_outcome([&](const ConceptVector& c, double w) {
    if (theorem_predictor(set, c) != c[set.j]) eb.epsilon_hat += w;
  });
  eb.bound = bound_value(set, 0.0);
  eb.satisfied = eb.epsilon_hat <= eb.bound + kBoundSlack;
  return eb;
}

ErrorBound empirical_error_noisy(const TripletSet& set, const JointConceptModel& model, double delta,
                                 std::uint64_t seed, std::size_t mc_draws) {
  require_nonempty(set);
  if (delta < 0.0 || delta > 1.0) throw std::invalid_argument("delta must lie in [0, 1]");
  std::vector<int> used;
  for (const Triplet& t : set.triplets) used.push_back(t.i);
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());

  ErrorBound eb;
  if (used.size() <= 12) {
    const std::size_t patterns = std::size_t{1} << used.size();
    std::vector<double> weight(patterns);
    for (std::size_t f = 0; f < patterns; ++f) {
      double w = 1.0;
      for (std::size_t b = 0; b < used.size(); ++b) w *= ((f >> b) & 1u) ? delta : 1.0 - delta;
      weight[f] = w;
    }
    model.for_each_outcome([&](const ConceptVector& c, double w) {
      ConceptVector noisy = c;
      for (std::size_t f = 0; f < patterns; ++f) {
        if (weight[f] == 0.0) continue;
        for (std::size_t b = 0; b < used.size(); ++b) noisy[used[b]] = c[used[b]] ^ ((f >> b) & 1u);
        if (theorem_predictor(set, noisy) != c[set.j]) eb.epsilon_hat += w * weight[f];
      }
    });
  } else {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution flip(delta);
    // Draw outcomes by inverse CDF over the model's masses.
    std::vector<ConceptVector> outcomes;
    std::vector<double> cdf;
    double acc = 0.0;
    model.for_each_outcome([&](const ConceptVector& c, double w) {
      outcomes.push_back(c);
      cdf.push_back(acc += w);
    });
    std::uniform_real_distribution<double> u(0.0, acc);
    std::size_t wrong = 0;
    for (std::size_t d = 0; d < mc_draws; ++d) {
      const auto pos = std::upper_bound(cdf.begin(), cdf.end(), u(rng)) - cdf.begin();
      const ConceptVector& c = outcomes[std::min<std::size_t>(static_cast<std::size_t>(pos), outcomes.size() - 1)];
      ConceptVector noisy = c;
      for (int i : used) noisy[i] = c[i] ^ static_cast<std::uint8_t>(flip(rng));
      wrong += theorem_predictor(set, noisy) != c[set.j];
    }
    eb.epsilon_hat = static_cast<double>(wrong) / static_cast<double>(mc_draws);
  }
  eb.bound = bound_value(set, delta);
  eb.satisfied = eb.epsilon_hat <= eb.bound + kBoundSlack;
  return eb;
}

std::pair<double, double> lemma_prod_identity(std::span<const double> p) {
  double lhs = 0.0;
  double prefix = 1.0;
  for (double v : p) {
    if (v < 0.0 || v > 1.0) throw std::invalid_argument("lemma inputs must lie in [0, 1]");
    lhs += v * prefix;
    prefix *= 1.0 - v;
  }
  return {lhs, 1.0 - prefix};
}

SumBound lemma_sum_bound(std::span<const double> p) {
  SumBound sb;
  sb.lhs = lemma_prod_identity(p).first;
  sb.holds = sb.lhs <= 1.0 + 1e-12;
  return sb;
}

std::vector<double> termination_masses(std::span<const double> p) {
  std::vector<double> masses;
  double prefix = 1.0;
  for (double v : p) {
    masses.push_back(v * prefix);
    prefix *= 1.0 - v;
  }
  masses.push_back(prefix);
  return masses;
}

std::optional<TrialRecord> run_theorem_trial(std::uint64_t seed, int kmax, double delta) {
  if (kmax < 2 || kmax > 16) throw std::invalid_argument("kmax must lie in [2, 16]");
  std::mt19937_64 rng(seed);
  const int k = std::uniform_int_distribution<int>(2, kmax)(rng);
  const JointConceptModel model = random_joint_table(k, rng());
  const int j = std::uniform_int_distribution<int>(0, k - 1)(rng);
  std::vector<int> others;
  for (int i = 0; i < k; ++i)
    if (i != j) others.push_back(i);
  std::shuffle(others.begin(), others.end(), rng);
  const int count = std::uniform_int_distribution<int>(1, static_cast<int>(others.size()))(rng);
  std::vector<int> known(others.begin(), others.begin() + count);
  const double alpha = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const double beta = std::uniform_real_distribution<double>(0.0, 0.6)(rng);

  TripletSet set;
  try {
    set = select_triplets(estimate_correlation(model), j, known, alpha, beta);
  } catch (const std::invalid_argument&) {
    return std::nullopt;
  }
  const ErrorBound eb = delta == 0.0 ? empirical_error(set, model) : empirical_error_noisy(set, model, delta, seed);
  return TrialRecord{seed, k, j, alpha, beta, delta, set.s(), eb.epsilon_hat, eb.bound, eb.satisfied};
}

}  // namespace cbmloc::theory
