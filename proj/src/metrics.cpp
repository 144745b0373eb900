#include "cbmloc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

#include "cbmloc/rng.hpp"
#include "cbmloc/train.hpp"

namespace cbmloc {

void validate(const PGDConfig& cfg) {
  if (cfg.steps < 0) throw std::invalid_argument("PGD steps must be >= 0");
  if (!(cfg.step_size > 0.0)) throw std::invalid_argument("PGD step_size must be > 0");
  if (cfg.restarts < 1) throw std::invalid_argument("PGD restarts must be >= 1");
  if (cfg.penalty_lambda < 0.0) throw std::invalid_argument("penalty_lambda must be >= 0");
  if (cfg.batch_columns < 1) throw std::invalid_argument("batch_columns must be >= 1");
}

std::string to_string(MaskKind kind) {
  switch (kind) {
    case MaskKind::kZero: return "zero";
    case MaskKind::kMean: return "mean";
    case MaskKind::kConstant: return "constant";
  }
  return "?";
}

MaskKind mask_kind_from_string(const std::string& s) {
  if (s == "zero") return MaskKind::kZero;
  if (s == "mean") return MaskKind::kMean;
  if (s == "constant") return MaskKind::kConstant;
  throw std::invalid_argument("unknown mask kind: " + s);
}

std::size_t MetricReport::total_excluded() const {
  return std::accumulate(n_excluded.begin(), n_excluded.end(), std::size_t{0});
}

void finalize_report(MetricReport& report, int k) {
  report.per_concept.assign(k, 0.0);
  report.n_samples.assign(k, 0);
  if (report.n_excluded.size() != static_cast<std::size_t>(k)) report.n_excluded.assign(k, 0);
  std::sort(report.records.begin(), report.records.end(), [](const SampleRecord& a, const SampleRecord& b) {
    return a.concept_index != b.concept_index ? a.concept_index < b.concept_index : a.sample < b.sample;
  });
  for (const auto& r : report.records) {
    report.per_concept[r.concept_index] += r.value;
    ++report.n_samples[r.concept_index];
  }
  double sum = 0.0;
  int used = 0;
  for (int j = 0; j < k; ++j) {
    if (report.n_samples[j] == 0) continue;
    report.per_concept[j] /= static_cast<double>(report.n_samples[j]);
    sum += report.per_concept[j];
    ++used;
  }
  report.mean = used > 0 ? sum / used : 0.0;
}

namespace {

std::uint64_t hash_vector(const Vector& v) {
  std::uint64_t h = 1469598103934665603ull;
  for (Eigen::Index a = 0; a < v.size(); ++a) {
    unsigned char bytes[sizeof(double)];
    const double d = v(a);
    std::memcpy(bytes, &d, sizeof d);
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ull;
    }
  }
  return h;
}

std::size_t eval_count(const Dataset& ds, std::size_t max_samples) {
  return max_samples == 0 ? ds.size() : std::min(ds.size(), max_samples);
}

void check_map(const Dataset& ds, const LocalityMap& map, std::size_t n) {
  if (map.k != ds.k) throw std::invalid_argument("locality map does not cover all concepts");
  if (map.sample_count() < n) throw std::invalid_argument("locality map does not cover all evaluated samples");
}

struct Column {
  std::size_t sample;
  int concept_index;
  int restart;
};

}  // namespace

MetricReport locality_leakage(const Network& g, const Dataset& ds, const LocalityMap& map, const PGDConfig& pgd,
                              const PgdObserver& observer) {
  validate(pgd);
  const std::size_t n = eval_count(ds, pgd.max_samples);
  check_map(ds, map, n);
  const int k = ds.k;
  const int m = ds.m;

  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  const Matrix clean_x = ds.inputs(rows);
  const Matrix clean = predict_batched(g, clean_x);

  std::vector<Column> columns;
  columns.reserve(n * k * pgd.restarts);
  for (std::size_t i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j)
      for (int r = 0; r < pgd.restarts; ++r) columns.push_back({i, j, r});

  // Best (penalised objective, distortion, hash) per column.
  std::vector<double> best_obj(columns.size(), -std::numeric_limits<double>::infinity());
  std::vector<double> best_dist(columns.size(), 0.0);
  std::vector<std::uint64_t> best_hash(columns.size(), 0);
  std::vector<std::uint8_t> failed(columns.size(), 0);

  ForwardCache cache;
  for (std::size_t start = 0; start < columns.size(); start += static_cast<std::size_t>(pgd.batch_columns)) {
    const std::size_t stop = std::min(columns.size(), start + static_cast<std::size_t>(pgd.batch_columns));
    const auto width = static_cast<Eigen::Index>(stop - start);
    Matrix x0(m, width);
    Matrix x(m, width);
    std::vector<std::vector<std::uint8_t>> pinned(static_cast<std::size_t>(width));
    for (Eigen::Index c = 0; c < width; ++c) {
      const Column& col = columns[start + static_cast<std::size_t>(c)];
      x0.col(c) = clean_x.col(static_cast<Eigen::Index>(col.sample));
      auto& pin = pinned[static_cast<std::size_t>(c)];
      pin.assign(m, 0);
      for (auto a : map.region(col.sample, col.concept_index)) pin[a] = 1;
      x.col(c) = x0.col(c);
      if (col.restart > 0) {
        std::mt19937_64 rng(derive_seed(pgd.seed, col.sample, static_cast<std::uint64_t>(col.concept_index),
                                        static_cast<std::uint64_t>(col.restart)));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int a = 0; a < m; ++a)
          if (!pin[a]) x(a, c) = u(rng);
      }
    }

    for (int step = 0; step <= pgd.steps; ++step) {
      if (observer)
        for (Eigen::Index c = 0; c < width; ++c) {
          const Column& col = columns[start + static_cast<std::size_t>(c)];
          observer(col.sample, col.concept_index, col.restart, step, x.col(c));
        }
      const Matrix out = g.forward(x, cache);
      Matrix seed = Matrix::Zero(out.rows(), width);
      for (Eigen::Index c = 0; c < width; ++c) {
        const std::size_t id = start + static_cast<std::size_t>(c);
        const Column& col = columns[id];
        const double ref = clean(col.concept_index, static_cast<Eigen::Index>(col.sample));
        const double d = out(col.concept_index, c) - ref;
        double dist2 = 0.0;
        if (pgd.penalty_lambda > 0.0)
          dist2 = (x.col(c) - x0.col(c)).squaredNorm();  // pinned coordinates contribute 0
        const double objective = std::abs(d) - pgd.penalty_lambda * dist2;
        if (!std::isfinite(objective)) {
          failed[id] = 1;
          continue;
        }
        if (objective > best_obj[id]) {
          best_obj[id] = objective;
          best_dist[id] = std::abs(d);
          best_hash[id] = hash_vector(x.col(c));
        }
        seed(col.concept_index, c) = d > 0 ? 1.0 : (d < 0 ? -1.0 : (ref >= 0.5 ? -1.0 : 1.0));
      }
      if (step == pgd.steps) break;
      Matrix grad = g.input_gradient(cache, seed);
      if (pgd.penalty_lambda > 0.0) grad -= 2.0 * pgd.penalty_lambda * (x - x0);
      for (Eigen::Index c = 0; c < width; ++c) {
        const std::size_t id = start + static_cast<std::size_t>(c);
        if (!grad.col(c).allFinite()) failed[id] = 1;
        if (failed[id]) continue;
        const auto& pin = pinned[static_cast<std::size_t>(c)];
        for (int a = 0; a < m; ++a) {
          if (pin[a]) {
            x(a, c) = x0(a, c);
            continue;
          }
          const double gv = grad(a, c);
          const double sgn = gv > 0 ? 1.0 : (gv < 0 ? -1.0 : 0.0);
          x(a, c) = std::clamp(x(a, c) + pgd.step_size * sgn, 0.0, 1.0);
        }
      }
    }
  }

  MetricReport rep;
  rep.metric_name = "leakage";
  rep.n_excluded.assign(k, 0);
  for (std::size_t base = 0; base < columns.size(); base += static_cast<std::size_t>(pgd.restarts)) {
    const Column& col = columns[base];
    bool bad = false;
    std::size_t best = base;
    for (std::size_t r = base; r < base + static_cast<std::size_t>(pgd.restarts); ++r) {
      bad = bad || failed[r];
      if (best_obj[r] > best_obj[best]) best = r;
    }
    if (bad) {
      ++rep.n_excluded[col.concept_index];
      continue;
    }
    rep.records.push_back({col.sample, col.concept_index, best_dist[best], static_cast<std::int64_t>(best_hash[best])});
  }
  finalize_report(rep, k);
  return rep;
}

MetricReport locality_intervention(const Matrix& probs, const Dataset& ds, const InterventionOptions& opt) {
  const int k = ds.k;
  const std::size_t n = ds.size();
  if (probs.rows() != k || static_cast<std::size_t>(probs.cols()) != n)
    throw std::invalid_argument("probability matrix does not match dataset");
  MetricReport rep;
  rep.metric_name = "intervention";
  rep.n_excluded.assign(k, 0);
  std::mt19937_64 rng(opt.seed);
  for (int j = 0; j < k; ++j) {
    std::vector<std::size_t> group[2];
    for (std::size_t i = 0; i < n; ++i) group[ds.samples[i].concepts[j] ? 1 : 0].push_back(i);
    for (int v = 0; v < 2; ++v) {
      const auto& members = group[v];
      if (members.empty()) continue;
      const bool capped = opt.candidate_cap > 0 && members.size() - 1 > opt.candidate_cap;
      std::size_t lo = members.front();
      std::size_t hi = members.front();
      for (auto l : members) {
        if (probs(j, static_cast<Eigen::Index>(l)) < probs(j, static_cast<Eigen::Index>(lo))) lo = l;
        if (probs(j, static_cast<Eigen::Index>(l)) > probs(j, static_cast<Eigen::Index>(hi))) hi = l;
      }
      for (auto i : members) {
        if (members.size() < 2) {
          ++rep.n_excluded[j];
          continue;
        }
        const double pi = probs(j, static_cast<Eigen::Index>(i));
        double best = -1.0;
        std::size_t witness = i;
        if (!capped) {
          // max_l |p_l - p_i| is attained at the group's min or max.
          const double up = probs(j, static_cast<Eigen::Index>(hi)) - pi;
          const double down = pi - probs(j, static_cast<Eigen::Index>(lo));
          if (up >= down) {
            best = up;
            witness = hi;
          } else {
            best = down;
            witness = lo;
          }
          if (witness == i) {  // every member predicts the same value
            witness = members[members[0] == i ? 1 : 0];
            best = std::abs(probs(j, static_cast<Eigen::Index>(witness)) - pi);
          }
        } else {
          std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
          for (std::size_t t = 0; t < opt.candidate_cap; ++t) {
            std::size_t l = members[pick(rng)];
            if (l == i) continue;
            const double d = std::abs(probs(j, static_cast<Eigen::Index>(l)) - pi);
            if (d > best) {
              best = d;
              witness = l;
            }
          }
          if (best < 0.0) {
            ++rep.n_excluded[j];
            continue;
          }
        }
        rep.records.push_back({i, j, best, static_cast<std::int64_t>(witness)});
      }
    }
  }
  finalize_report(rep, k);
  return rep;
}

MetricReport locality_intervention(const Network& g, const Dataset& ds, const InterventionOptions& opt) {
  return locality_intervention(predict_batched(g, ds.inputs()), ds, opt);
}

Vector apply_mask(const Vector& x, const std::vector<std::uint32_t>& region, const MaskSpec& mask,
                  const std::vector<double>& feature_means) {
  if (mask.kind == MaskKind::kConstant && (mask.eta < 0.0 || mask.eta > 1.0))
    throw std::invalid_argument("mask eta must lie in [0, 1]");
  Vector out = x;
  for (auto a : region) {
    if (a >= static_cast<std::uint32_t>(x.size())) throw std::invalid_argument("region index out of range");
    switch (mask.kind) {
      case MaskKind::kZero: out(a) = 0.0; break;
      case MaskKind::kMean: out(a) = feature_means.at(a); break;
      case MaskKind::kConstant: out(a) = mask.eta; break;
    }
  }
  return out;
}

namespace {

bool disjoint(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i == *j) return false;
    if (*i < *j)
      ++i;
    else
      ++j;
  }
  return true;
}

// Output of g on x^(i) with region `rid` masked, for every (sample, region) pair used.
struct MaskedOutputs {
  std::map<std::pair<std::size_t, std::uint32_t>, Eigen::Index> column;
  Matrix out;
};

MaskedOutputs masked_forward(const Network& g, const Dataset& ds, const LocalityMap& map, const MaskSpec& mask,
                             std::size_t n) {
  MaskedOutputs mo;
  std::vector<std::pair<std::size_t, std::uint32_t>> keys;
  for (std::size_t i = 0; i < n; ++i)
    for (int j = 0; j < ds.k; ++j) {
      auto key = std::make_pair(i, map.region_id(i, j));
      if (mo.column.emplace(key, static_cast<Eigen::Index>(keys.size())).second) keys.push_back(key);
    }
  mo.out.resize(g.output_dim(), static_cast<Eigen::Index>(keys.size()));
  const std::size_t chunk = 64;
  for (std::size_t s = 0; s < keys.size(); s += chunk) {
    const std::size_t e = std::min(keys.size(), s + chunk);
    Matrix x(ds.m, static_cast<Eigen::Index>(e - s));
    for (std::size_t c = s; c < e; ++c)
      x.col(static_cast<Eigen::Index>(c - s)) =
          apply_mask(ds.input(keys[c].first), map.regions[keys[c].second], mask, ds.feature_means);
    mo.out.middleCols(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(e - s)) = g.forward(x);
  }
  return mo;
}

}  // namespace

MaskingPair locality_masking(const Network& g, const Dataset& ds, const LocalityMap& map, const MaskSpec& mask) {
  const std::size_t n = ds.size();
  check_map(ds, map, n);
  const int k = ds.k;
  const Matrix clean = predict_batched(g, ds.inputs());
  const MaskedOutputs mo = masked_forward(g, ds, map, mask, n);

  std::map<std::pair<std::uint32_t, std::uint32_t>, bool> disjoint_cache;
  auto is_disjoint = [&](std::uint32_t a, std::uint32_t b) {
    auto key = std::minmax(a, b);
    auto it = disjoint_cache.find(key);
    if (it != disjoint_cache.end()) return it->second;
    const bool d = disjoint(map.regions[a], map.regions[b]);
    disjoint_cache.emplace(key, d);
    return d;
  };

  MaskingPair res;
  res.relevant.metric_name = "relevant_masking";
  res.irrelevant.metric_name = "irrelevant_masking";
  res.relevant.n_excluded.assign(k, 0);
  res.irrelevant.n_excluded.assign(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) {
      const double base = clean(j, static_cast<Eigen::Index>(i));
      const std::uint32_t rj = map.region_id(i, j);
      const Eigen::Index own = mo.column.at({i, rj});
      res.relevant.records.push_back({i, j, std::abs(mo.out(j, own) - base), -1});

      double sum = 0.0;
      int count = 0;
      for (int jp = 0; jp < k; ++jp) {
        const std::uint32_t rp = map.region_id(i, jp);
        if (!is_disjoint(rj, rp)) continue;
        sum += std::abs(mo.out(j, mo.column.at({i, rp})) - base);
        ++count;
      }
      if (count == 0) {
        ++res.irrelevant.n_excluded[j];
        continue;
      }
      res.irrelevant.records.push_back({i, j, sum / count, -1});
    }
  }
  finalize_report(res.relevant, k);
  finalize_report(res.irrelevant, k);
  return res;
}

MetricReport relevant_masking(const Network& g, const Dataset& ds, const LocalityMap& map, const MaskSpec& mask) {
  return locality_masking(g, ds, map, mask).relevant;
}

MetricReport irrelevant_masking(const Network& g, const Dataset& ds, const LocalityMap& map, const MaskSpec& mask) {
  return locality_masking(g, ds, map, mask).irrelevant;
}

std::vector<ConfidenceSweepRow> masked_confidence_sweep(const Network& g, const Dataset& ds, const LocalityMap& map,
                                                        const std::vector<double>& radii, double confidence_threshold,
                                                        const MaskSpec& mask) {
  if (confidence_threshold < 0.5 || confidence_threshold > 1.0)
    throw std::invalid_argument("confidence threshold must lie in [0.5, 1]");
  const std::size_t n = ds.size();
  check_map(ds, map, n);
  const Matrix clean = predict_batched(g, ds.inputs());
  std::vector<ConfidenceSweepRow> rows;
  for (double radius : radii) {
    const LocalityMap dilated = dilate_regions(map, radius, ds.image_side);
    const MaskedOutputs mo = masked_forward(g, ds, dilated, mask, n);
    ConfidenceSweepRow row;
    row.radius_fraction = radius;
    for (std::size_t i = 0; i < n; ++i)
      for (int j = 0; j < ds.k; ++j) {
        const double p = clean(j, static_cast<Eigen::Index>(i));
        if (std::max(p, 1.0 - p) < confidence_threshold) continue;
        ++row.confident;
        const double q = mo.out(j, mo.column.at({i, dilated.region_id(i, j)}));
        row.changed += concept_decision(p) != concept_decision(q);
      }
    row.change_rate = row.confident ? static_cast<double>(row.changed) / static_cast<double>(row.confident) : 0.0;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace cbmloc
