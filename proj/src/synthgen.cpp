#include "cbmloc/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

namespace cbmloc {

LocalityMap LocalityMap::select(std::span<const std::size_t> rows) const {
  LocalityMap out;
  out.k = k;
  out.regions = regions;
  out.region_of.reserve(rows.size() * k);
  for (std::size_t r : rows)
    for (int j = 0; j < k; ++j) out.region_of.push_back(region_of[r * k + j]);
  return out;
}

Matrix Dataset::inputs(std::span<const std::size_t> rows) const {
  Matrix x(m, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t c = 0; c < rows.size(); ++c) {
    const auto& px = samples[rows[c]].pixels;
    for (int a = 0; a < m; ++a) x(a, static_cast<Eigen::Index>(c)) = px[a];
  }
  return x;
}

Matrix Dataset::inputs() const {
  std::vector<std::size_t> rows(samples.size());
  std::iota(rows.begin(), rows.end(), 0);
  return inputs(rows);
}

Vector Dataset::input(std::size_t row) const {
  Vector x(m);
  for (int a = 0; a < m; ++a) x(a) = samples[row].pixels[a];
  return x;
}

void Dataset::validate() const {
  if (static_cast<int>(feature_means.size()) != m) throw std::invalid_argument("feature_means length != m");
  if (locality.k != k) throw std::invalid_argument("locality map k mismatch");
  if (locality.region_of.size() != samples.size() * static_cast<std::size_t>(k))
    throw std::invalid_argument("locality map sample count mismatch");
  for (auto id : locality.region_of)
    if (id >= locality.regions.size()) throw std::invalid_argument("locality region id out of range");
  for (const auto& r : locality.regions)
    for (auto a : r)
      if (a >= static_cast<std::uint32_t>(m)) throw std::invalid_argument("region index out of range");
  for (const auto& s : samples) {
    if (static_cast<int>(s.pixels.size()) != m) throw std::invalid_argument("sample pixel count mismatch");
    if (static_cast<int>(s.concepts.size()) != k) throw std::invalid_argument("sample concept count mismatch");
    if (s.label < 0 || s.label >= num_classes) throw std::invalid_argument("sample label out of range");
  }
}

GridLayout grid_for(int num_objects) {
  switch (num_objects) {
    case 1: return {1, 1};
    case 2: return {1, 2};
    case 4: return {2, 2};
    case 8: return {2, 4};
    default: throw std::invalid_argument("num_objects must be 1, 2, 4 or 8");
  }
}

void validate(const SynthConfig& cfg) {
  const GridLayout g = grid_for(cfg.num_objects);
  if (cfg.image_side < 1 || cfg.image_side % g.rows != 0 || cfg.image_side % g.cols != 0)
    throw std::invalid_argument("image_side " + std::to_string(cfg.image_side) +
                                " not divisible by the object grid");
  if (cfg.samples < 1) throw std::invalid_argument("samples must be >= 1");
  if (cfg.shape_fill == cfg.background) throw std::invalid_argument("shape_fill must differ from background");
  for (double v : {cfg.shape_fill, cfg.background})
    if (v < 0.0 || v > 1.0) throw std::invalid_argument("luminance outside [0,1]");
}

namespace {

struct Box {
  double x0, y0, x1, y1;
};

// Square shape box centred in the cell, margin 20% of the cell's shorter side.
Box shape_box(const GridLayout& g, int side, int cell) {
  const double cw = static_cast<double>(side) / g.cols;
  const double ch = static_cast<double>(side) / g.rows;
  const double cx = (cell % g.cols + 0.5) * cw;
  const double cy = (cell / g.cols + 0.5) * ch;
  const double half = 0.5 * std::min(cw, ch) * (1.0 - 2.0 * 0.2);
  return {cx - half, cy - half, cx + half, cy + half};
}

bool in_square(const Box& b, double px, double py) { return px >= b.x0 && px < b.x1 && py >= b.y0 && py < b.y1; }

bool in_triangle(const Box& b, double px, double py) {
  if (py < b.y0 || py >= b.y1) return false;
  const double t = (py - b.y0) / (b.y1 - b.y0);
  const double half_width = 0.5 * (b.x1 - b.x0) * t;
  return std::abs(px - 0.5 * (b.x0 + b.x1)) <= half_width;
}

// Each combination drawn only once is given a sample taken from the most
// frequent combination, so every present combination has >= 2 samples.
void ensure_pairs(std::vector<std::uint32_t>& codes) {
  std::map<std::uint32_t, std::vector<std::size_t>> where;
  for (std::size_t i = 0; i < codes.size(); ++i) where[codes[i]].push_back(i);
  for (auto& [code, rows] : where) {
    if (rows.size() != 1) continue;
    auto donor = std::max_element(where.begin(), where.end(),
                                  [](const auto& a, const auto& b) { return a.second.size() < b.second.size(); });
    if (donor->second.size() < 3) break;
    const std::size_t moved = donor->second.back();
    donor->second.pop_back();
    codes[moved] = code;
    rows.push_back(moved);
  }
}

}  // namespace

std::vector<double> compute_feature_means(const std::vector<Sample>& samples, int m) {
  std::vector<double> means(static_cast<std::size_t>(m), 0.0);
  if (samples.empty()) return means;
  for (const auto& s : samples)
    for (int a = 0; a < m; ++a) means[a] += s.pixels[a];
  for (double& v : means) v /= static_cast<double>(samples.size());
  return means;
}

Dataset generate_dataset(const SynthConfig& cfg) {
  validate(cfg);
  const GridLayout g = grid_for(cfg.num_objects);
  const int side = cfg.image_side;
  Dataset ds;
  ds.m = side * side;
  ds.k = 2 * cfg.num_objects;
  ds.image_side = side;
  ds.num_objects = cfg.num_objects;
  ds.num_classes = cfg.num_objects + 1;

  std::vector<Box> boxes;
  for (int c = 0; c < cfg.num_objects; ++c) boxes.push_back(shape_box(g, side, c));

  // Region of a location: every pixel whose centre lies in the shape box.
  ds.locality.k = ds.k;
  for (const Box& b : boxes) {
    std::vector<std::uint32_t> region;
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x)
        if (in_square(b, x + 0.5, y + 0.5)) region.push_back(static_cast<std::uint32_t>(y * side + x));
    if (region.empty()) throw std::invalid_argument("image_side too small: empty shape region");
    ds.locality.regions.push_back(std::move(region));
  }

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::uint32_t> draw(0, (1u << cfg.num_objects) - 1);
  std::vector<std::uint32_t> codes(static_cast<std::size_t>(cfg.samples));
  for (auto& c : codes) c = draw(rng);
  if (cfg.samples >= 2 * (1 << cfg.num_objects)) ensure_pairs(codes);

  // Shape masks are fixed per location, so rasterise each once.
  std::vector<std::vector<std::uint8_t>> square_mask(boxes.size()), triangle_mask(boxes.size());
  for (std::size_t c = 0; c < boxes.size(); ++c) {
    square_mask[c].assign(ds.m, 0);
    triangle_mask[c].assign(ds.m, 0);
    for (auto a : ds.locality.regions[c]) {
      const double px = a % side + 0.5;
      const double py = a / side + 0.5;
      square_mask[c][a] = in_square(boxes[c], px, py);
      triangle_mask[c][a] = in_triangle(boxes[c], px, py);
    }
  }

  ds.samples.reserve(codes.size());
  for (std::uint32_t code : codes) {
    Sample s;
    s.pixels.assign(ds.m, static_cast<float>(cfg.background));
    s.concepts.assign(ds.k, 0);
    int squares = 0;
    for (int c = 0; c < cfg.num_objects; ++c) {
      const bool square = (code >> c) & 1u;
      s.concepts[2 * c] = square ? 1 : 0;
      s.concepts[2 * c + 1] = square ? 0 : 1;
      squares += square;
      const auto& mask = square ? square_mask[c] : triangle_mask[c];
      for (auto a : ds.locality.regions[c])
        if (mask[a]) s.pixels[a] = static_cast<float>(cfg.shape_fill);
    }
    s.label = squares;
    ds.samples.push_back(std::move(s));
    for (int c = 0; c < cfg.num_objects; ++c) {
      ds.locality.region_of.push_back(static_cast<std::uint32_t>(c));
      ds.locality.region_of.push_back(static_cast<std::uint32_t>(c));
    }
  }
  ds.feature_means = compute_feature_means(ds.samples, ds.m);
  return ds;
}

std::vector<std::vector<std::uint8_t>> distinct_combinations(const Dataset& ds) {
  std::set<std::vector<std::uint8_t>> seen;
  for (const auto& s : ds.samples) seen.insert(s.concepts);
  return {seen.begin(), seen.end()};
}

Dataset subsample_concept_combinations(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0) throw std::invalid_argument("fraction must lie in (0, 1]");
  if (ds.empty()) throw std::invalid_argument("cannot subsample an empty dataset");
  auto combos = distinct_combinations(ds);
  const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(combos.size()) - 1e-9));
  std::mt19937_64 rng(seed);
  std::shuffle(combos.begin(), combos.end(), rng);
  combos.resize(std::max<std::size_t>(keep, 1));
  const std::set<std::vector<std::uint8_t>> retained(combos.begin(), combos.end());

  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    if (retained.count(ds.samples[i].concepts)) rows.push_back(i);

  Dataset out = ds;
  out.samples.clear();
  for (auto r : rows) out.samples.push_back(ds.samples[r]);
  out.locality = ds.locality.select(rows);
  out.feature_means = compute_feature_means(out.samples, out.m);
  return out;
}

Dataset add_gaussian_noise(const Dataset& ds, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) throw std::invalid_argument("sigma must be >= 0");
  Dataset out = ds;
  if (sigma == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  for (auto& s : out.samples)
    for (auto& p : s.pixels) p = static_cast<float>(std::clamp(p + noise(rng), 0.0, 1.0));
  out.feature_means = compute_feature_means(out.samples, out.m);
  return out;
}

LocalityMap dilate_regions(const LocalityMap& map, double radius_fraction, int image_side) {
  if (radius_fraction < 0.0) throw std::invalid_argument("radius_fraction must be >= 0");
  if (radius_fraction == 0.0) return map;
  const double radius = radius_fraction * image_side;
  const double r2 = radius * radius;
  LocalityMap out = map;
  for (auto& region : out.regions) {
    if (region.empty()) continue;
    double cx = 0.0;
    double cy = 0.0;
    for (auto a : region) {
      cx += a % image_side;
      cy += a / image_side;
    }
    cx /= static_cast<double>(region.size());
    cy /= static_cast<double>(region.size());
    std::set<std::uint32_t> grown(region.begin(), region.end());
    for (int y = 0; y < image_side; ++y)
      for (int x = 0; x < image_side; ++x)
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r2) grown.insert(static_cast<std::uint32_t>(y * image_side + x));
    region.assign(grown.begin(), grown.end());
  }
  return out;
}

std::string to_pgm(const Dataset& ds, std::size_t sample) {
  const int side = ds.image_side;
  if (side * side != ds.m) throw std::invalid_argument("dataset is not a square image set");
  std::string out = "P5\n" + std::to_string(side) + " " + std::to_string(side) + "\n255\n";
  for (float p : ds.samples.at(sample).pixels)
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(p, 0.0f, 1.0f) * 255.0f))));
  return out;
}

}  // namespace cbmloc
