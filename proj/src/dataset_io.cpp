#include "cbmloc/dataset_io.hpp"

#include <json.hpp>

#include "binary.hpp"

namespace cbmloc {

using nlohmann::json;

namespace {

constexpr char kMagic[] = "CBMLDS01";
constexpr int kVersion = 1;

}  // namespace

Bytes serialize_dataset(const Dataset& ds) {
  ds.validate();
  std::vector<std::uint64_t> offsets{0};
  std::vector<std::uint32_t> indices;
  for (const auto& r : ds.locality.regions) {
    indices.insert(indices.end(), r.begin(), r.end());
    offsets.push_back(indices.size());
  }
  std::vector<int> concepts;
  std::vector<int> labels;
  concepts.reserve(ds.size() * static_cast<std::size_t>(ds.k));
  for (const auto& s : ds.samples) {
    concepts.insert(concepts.end(), s.concepts.begin(), s.concepts.end());
    labels.push_back(s.label);
  }
  const json manifest = {{"version", kVersion},
                         {"m", ds.m},
                         {"k", ds.k},
                         {"image_side", ds.image_side},
                         {"num_objects", ds.num_objects},
                         {"num_classes", ds.num_classes},
                         {"sample_count", ds.size()},
                         {"region_offsets", offsets},
                         {"region_indices", indices},
                         {"region_of", ds.locality.region_of},
                         {"concepts", concepts},
                         {"labels", labels}};
  detail::Writer w;
  w.magic(kMagic);
  w.text(manifest.dump());
  for (const auto& s : ds.samples) w.pod<float>(s.pixels);
  w.f64(ds.feature_means);
  return w.take();
}

Dataset deserialize_dataset(const Bytes& bytes) {
  detail::Reader r(bytes, "dataset");
  r.magic(kMagic);
  const json m = r.json_doc();
  Dataset ds;
  try {
    if (m.at("version").get<int>() != kVersion) throw FormatError("dataset: unsupported version");
    ds.m = m.at("m").get<int>();
    ds.k = m.at("k").get<int>();
    ds.image_side = m.at("image_side").get<int>();
    ds.num_objects = m.at("num_objects").get<int>();
    ds.num_classes = m.at("num_classes").get<int>();
    const auto n = m.at("sample_count").get<std::size_t>();
    const auto offsets = m.at("region_offsets").get<std::vector<std::uint64_t>>();
    const auto indices = m.at("region_indices").get<std::vector<std::uint32_t>>();
    if (offsets.empty() || offsets.front() != 0 || offsets.back() != indices.size())
      throw FormatError("dataset: malformed manifest (region offsets)");
    for (std::size_t i = 0; i + 1 < offsets.size(); ++i) {
      if (offsets[i + 1] < offsets[i]) throw FormatError("dataset: malformed manifest (region offsets)");
      ds.locality.regions.emplace_back(indices.begin() + static_cast<std::ptrdiff_t>(offsets[i]),
                                       indices.begin() + static_cast<std::ptrdiff_t>(offsets[i + 1]));
    }
    ds.locality.k = ds.k;
    ds.locality.region_of = m.at("region_of").get<std::vector<std::uint32_t>>();
    const auto concepts = m.at("concepts").get<std::vector<int>>();
    const auto labels = m.at("labels").get<std::vector<int>>();
    if (ds.m < 0 || ds.k < 0 || concepts.size() != n * static_cast<std::size_t>(ds.k) || labels.size() != n)
      throw FormatError("dataset: malformed manifest (array sizes)");
    ds.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto& s = ds.samples[i];
      s.pixels = r.pod<float>(static_cast<std::uint64_t>(ds.m));
      s.concepts.assign(concepts.begin() + static_cast<std::ptrdiff_t>(i * ds.k),
                        concepts.begin() + static_cast<std::ptrdiff_t>((i + 1) * ds.k));
      s.label = labels[i];
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("dataset: malformed manifest: ") + e.what());
  }
  ds.feature_means = r.f64(static_cast<std::uint64_t>(ds.m));
  r.finish();
  try {
    ds.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("dataset: ") + e.what());
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) { write_file(path, serialize_dataset(ds)); }
Dataset load_dataset(const std::filesystem::path& path) { return deserialize_dataset(read_file(path)); }

void write_pgm(const Dataset& ds, std::size_t sample, const std::filesystem::path& path) {
  write_text(path, to_pgm(ds, sample));
}

}  // namespace cbmloc
