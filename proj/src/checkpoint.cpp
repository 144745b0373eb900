#include "cbmloc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "binary.hpp"

namespace cbmloc {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "binary artifacts assume a little-endian host");

namespace {

constexpr char kNetMagic[] = "CBMLNET1";
constexpr char kCbmMagic[] = "CBMLCBM1";

json config_json(const NetworkConfig& cfg) {
  json layers = json::array();
  for (const auto& l : cfg.layers)
    layers.push_back({{"kind", to_string(l.kind)},
                      {"width", l.width},
                      {"kernel", l.kernel},
                      {"stride", l.stride},
                      {"activation", to_string(l.activation)}});
  return {{"input", {cfg.input.channels, cfg.input.height, cfg.input.width}},
          {"layers", layers},
          {"output_dim", cfg.output_dim},
          {"init_seed", cfg.init_seed}};
}

NetworkConfig config_from(const json& j) {
  try {
    NetworkConfig cfg;
    const auto& in = j.at("input");
    if (!in.is_array() || in.size() != 3) throw FormatError("network config: input must be [c, h, w]");
    cfg.input = {in[0].get<int>(), in[1].get<int>(), in[2].get<int>()};
    for (const auto& l : j.at("layers")) {
      LayerSpec s;
      s.kind = layer_kind_from_string(l.at("kind").get<std::string>());
      s.width = l.at("width").get<int>();
      s.kernel = l.at("kernel").get<int>();
      s.stride = l.at("stride").get<int>();
      s.activation = activation_from_string(l.at("activation").get<std::string>());
      cfg.layers.push_back(s);
    }
    cfg.output_dim = j.at("output_dim").get<int>();
    cfg.init_seed = j.at("init_seed").get<std::uint64_t>();
    infer_shapes(cfg);
    return cfg;
  } catch (const json::exception& e) {
    throw FormatError(std::string("network config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("network config: ") + e.what());
  }
}

Network network_from(const json& cfg_json, std::span<const double> params) {
  Network net(config_from(cfg_json));
  if (params.size() != net.parameter_count()) throw FormatError("parameter blob length mismatch");
  net.set_flat_parameters(params);
  return net;
}

}  // namespace

std::string network_config_to_json(const NetworkConfig& cfg) { return config_json(cfg).dump(); }

NetworkConfig network_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("network config: ") + e.what());
  }
  return config_from(j);
}

Bytes serialize_network(const Network& net) {
  detail::Writer w;
  w.magic(kNetMagic);
  w.text(config_json(net.config()).dump());
  w.f64(net.flat_parameters());
  return w.take();
}

Network deserialize_network(const Bytes& bytes) {
  detail::Reader r(bytes, "network checkpoint");
  r.magic(kNetMagic);
  const json cfg = r.json_doc();
  const std::size_t count = count_parameters(config_from(cfg));
  auto params = r.f64(count);
  r.finish();
  return network_from(cfg, params);
}

Bytes serialize_cbm(const CBModel& model) {
  json manifest = {{"version", 1},
                   {"residual", model.residual()},
                   {"g", config_json(model.g().config())},
                   {"f", config_json(model.f().config())},
                   {"g_parameters", model.g().parameter_count()},
                   {"f_parameters", model.f().parameter_count()}};
  detail::Writer w;
  w.magic(kCbmMagic);
  w.text(manifest.dump());
  w.f64(model.g().flat_parameters());
  w.f64(model.f().flat_parameters());
  return w.take();
}

CBModel deserialize_cbm(const Bytes& bytes) {
  detail::Reader r(bytes, "cbm checkpoint");
  r.magic(kCbmMagic);
  const json m = r.json_doc();
  try {
    if (m.at("version").get<int>() != 1) throw FormatError("cbm checkpoint: unsupported version");
    auto gp = r.f64(m.at("g_parameters").get<std::size_t>());
    auto fp = r.f64(m.at("f_parameters").get<std::size_t>());
    r.finish();
    return CBModel(network_from(m.at("g"), gp), network_from(m.at("f"), fp), m.at("residual").get<bool>());
  } catch (const json::exception& e) {
    throw FormatError(std::string("cbm checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("cbm checkpoint: ") + e.what());
  }
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, const Bytes& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, Bytes(text.begin(), text.end()));
}

void save_network(const Network& net, const std::filesystem::path& path) { write_file(path, serialize_network(net)); }
Network load_network(const std::filesystem::path& path) { return deserialize_network(read_file(path)); }
void save_cbm(const CBModel& model, const std::filesystem::path& path) { write_file(path, serialize_cbm(model)); }
CBModel load_cbm(const std::filesystem::path& path) { return deserialize_cbm(read_file(path)); }

}  // namespace cbmloc
