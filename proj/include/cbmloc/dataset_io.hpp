#pragma once

#include <filesystem>

#include "cbmloc/checkpoint.hpp"
#include "cbmloc/synthgen.hpp"

namespace cbmloc {

/// "CBMLDS01" | u64 manifest length | JSON manifest | f32 pixels (n * m) |
/// f64 feature means (m). The manifest carries sizes, concept/label arrays and
/// the locality map as region offsets/indices plus the per-sample lookup.
Bytes serialize_dataset(const Dataset& ds);
/// Throws FormatError on malformed manifests or length mismatches.
Dataset deserialize_dataset(const Bytes& bytes);

void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

void write_pgm(const Dataset& ds, std::size_t sample, const std::filesystem::path& path);

}  // namespace cbmloc
