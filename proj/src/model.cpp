#include "volfuse/network.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>

#include "volfuse/errors.hpp"

namespace volfuse {

void validate(const ModelConfig& config) {
  if (config.modalities.empty()) throw ConfigError("model needs at least one modality");
  std::set<std::string> seen;
  for (const auto& m : config.modalities) {
    if (m.empty()) throw ConfigError("modality names must be non-empty");
    if (!seen.insert(m).second) throw ConfigError("duplicate modality name '" + m + "'");
  }
  for (int c : config.encoder_channels) {
    if (c <= 0) throw ConfigError("encoder channel counts must be positive");
  }
  if (config.embedding_dim != config.encoder_channels.back()) {
    throw ConfigError("embedding_dim must equal the last encoder channel count");
  }
  if (config.fused_dim !=
      config.embedding_dim * static_cast<int>(config.modalities.size())) {
    throw ConfigError("fused_dim must equal embedding_dim x modality count");
  }
  if (config.head_hidden <= 0) throw ConfigError("head_hidden must be positive");
  if (config.dropout_p < 0.0 || config.dropout_p >= 1.0) {
    throw ConfigError("dropout_p must lie in [0, 1)");
  }
  if (config.n_classes < 2) throw ConfigError("n_classes must be at least 2");
  if (config.spatial_rank != 2 && config.spatial_rank != 3) {
    throw ConfigError("spatial_rank must be 2 or 3");
  }
  if (config.conv_kernel < 1 || config.conv_kernel % 2 == 0) {
    throw ConfigError("conv_kernel must be a positive odd number");
  }
  if (config.pool_kernel < 1) throw ConfigError("pool_kernel must be positive");
}

nlohmann::ordered_json to_json(const ModelConfig& config) {
  nlohmann::ordered_json j;
  j["modalities"] = config.modalities;
  j["encoder_channels"] = config.encoder_channels;
  j["embedding_dim"] = config.embedding_dim;
  j["fused_dim"] = config.fused_dim;
  j["head_hidden"] = config.head_hidden;
  j["dropout_p"] = config.dropout_p;
  j["n_classes"] = config.n_classes;
  j["spatial_rank"] = config.spatial_rank;
  j["conv_kernel"] = config.conv_kernel;
  j["pool_kernel"] = config.pool_kernel;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base) {
  ModelConfig c = std::move(base);
  try {
    if (j.contains("modalities")) c.modalities = j["modalities"].get<std::vector<std::string>>();
    if (j.contains("encoder_channels")) {
      const auto v = j["encoder_channels"].get<std::vector<int>>();
      if (v.size() != 3) throw ConfigError("encoder_channels must list 3 blocks");
      std::copy(v.begin(), v.end(), c.encoder_channels.begin());
    }
    if (j.contains("embedding_dim")) c.embedding_dim = j["embedding_dim"].get<int>();
    if (j.contains("fused_dim")) c.fused_dim = j["fused_dim"].get<int>();
    if (j.contains("head_hidden")) c.head_hidden = j["head_hidden"].get<int>();
    if (j.contains("dropout_p")) c.dropout_p = j["dropout_p"].get<double>();
    if (j.contains("n_classes")) c.n_classes = j["n_classes"].get<int>();
    if (j.contains("spatial_rank")) c.spatial_rank = j["spatial_rank"].get<int>();
    if (j.contains("conv_kernel")) c.conv_kernel = j["conv_kernel"].get<int>();
    if (j.contains("pool_kernel")) c.pool_kernel = j["pool_kernel"].get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
  validate(c);
  return c;
}

namespace {

constexpr char kCheckpointMagic[8] = {'V', 'F', 'C', 'K', 'P', 'T', '0', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& config,
                     const NetworkParameters<float>& params,
                     const nlohmann::ordered_json& metadata) {
  nlohmann::ordered_json header;
  header["format_version"] = 1;
  header["config"] = to_json(config);
  header["metadata"] = metadata;
  header["tensors"] = nlohmann::ordered_json::array();
  for (const auto& [name, t] : params.tensors) {
    nlohmann::ordered_json entry;
    entry["name"] = name;
    entry["shape"] = t.shape;
    header["tensors"].push_back(std::move(entry));
  }
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open checkpoint file for writing: " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint64_t len = header_str.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_str.data(), static_cast<std::streamsize>(len));
  for (const auto& [name, t] : params.tensors) {
    out.write(reinterpret_cast<const char*>(t.ptr()),
              static_cast<std::streamsize>(t.size() * sizeof(float)));
  }
  if (!out) throw Error("short write while saving checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint file: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw ParseError("not a checkpoint file (bad magic): " + path);
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len == 0 || len > (1u << 20)) {
    throw ParseError("checkpoint header length implausible: " + path);
  }
  std::string header_str(len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(len));
  if (!in) throw ParseError("truncated checkpoint header: " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }

  Checkpoint ckpt;
  ckpt.config = model_config_from_json(header.at("config"));
  ckpt.metadata = header.value("metadata", nlohmann::ordered_json::object());
  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    Tensor<float> t(entry.at("shape").get<std::vector<std::size_t>>());
    in.read(reinterpret_cast<char*>(t.ptr()),
            static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!in) throw ParseError("truncated tensor data for '" + name + "': " + path);
    ckpt.params.tensors[name] = std::move(t);
  }
  if (!all_finite(ckpt.params)) {
    throw Error("checkpoint contains non-finite parameter values: " + path);
  }
  return ckpt;
}

}  // namespace volfuse
