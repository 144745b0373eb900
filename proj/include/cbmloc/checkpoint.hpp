#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "cbmloc/cbm.hpp"
#include "cbmloc/nnet.hpp"

namespace cbmloc {

using Bytes = std::vector<std::uint8_t>;

/// Raised for truncated or malformed binary artifacts.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string network_config_to_json(const NetworkConfig& cfg);
/// Throws FormatError on malformed documents.
NetworkConfig network_config_from_json(const std::string& text);

/// "CBMLNET1" | u64 config length | JSON config | little-endian f64 parameters.
Bytes serialize_network(const Network& net);
Network deserialize_network(const Bytes& bytes);

/// "CBMLCBM1" | u64 manifest length | JSON manifest | f64 g parameters | f64 f parameters.
Bytes serialize_cbm(const CBModel& model);
CBModel deserialize_cbm(const Bytes& bytes);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const Bytes& bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

void save_network(const Network& net, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);
void save_cbm(const CBModel& model, const std::filesystem::path& path);
CBModel load_cbm(const std::filesystem::path& path);

}  // namespace cbmloc
