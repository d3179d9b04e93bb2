#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include "mvgib/error.hpp"
#include "mvgib/models.hpp"

namespace mvgib {

inline constexpr const char* kCheckpointFormat = "mvgib-checkpoint";
inline constexpr int kCheckpointVersion = 1;

/// A model plus free-form string metadata (the resolved experiment config is
/// stored under "config").
struct Checkpoint {
  ModelConfig model;
  std::map<std::string, std::string> metadata;
};

/// Serializes every named parameter (trainable or buffer) as a CBOR map.
///
/// Layout:
///   { "format": "mvgib-checkpoint", "version": 1,
///     "model": { "feature_dim", "layers", "hidden_dim", "batch_norm", "seed" },
///     "metadata": { string: string },
///     "tensors": { name: { "rows", "cols", "data": [row-major doubles] } } }
inline std::vector<std::uint8_t> checkpoint_bytes(MvgibModel& model,
                                                  const std::map<std::string, std::string>& metadata = {}) {
  const ModelConfig& cfg = model.config();
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["model"] = {{"feature_dim", cfg.feature_dim},
                {"layers", cfg.encoder.layers},
                {"hidden_dim", cfg.encoder.hidden_dim},
                {"batch_norm", cfg.encoder.batch_norm},
                {"seed", cfg.seed}};
  j["metadata"] = metadata;
  nlohmann::json tensors = nlohmann::json::object();
  for (const Param* p : model.parameters()) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(p->value.size()));
    for (Eigen::Index r = 0; r < p->value.rows(); ++r)
      for (Eigen::Index c = 0; c < p->value.cols(); ++c) data.push_back(p->value(r, c));
    tensors[p->name] = {{"rows", p->value.rows()}, {"cols", p->value.cols()}, {"data", std::move(data)}};
  }
  j["tensors"] = std::move(tensors);
  return nlohmann::json::to_cbor(j);
}

inline void save_checkpoint(const std::filesystem::path& path, MvgibModel& model,
                            const std::map<std::string, std::string>& metadata = {}) {
  const auto bytes = checkpoint_bytes(model, metadata);
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing checkpoint: " + path.string());
}

/// Rebuilds a model from checkpoint bytes. Any structural mismatch raises
/// CheckpointError.
inline MvgibModel model_from_bytes(const std::vector<std::uint8_t>& bytes, Checkpoint* info = nullptr) {
  nlohmann::json j;
  try {
    j = nlohmann::json::from_cbor(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint parse error: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat) throw CheckpointError("not an mvgib checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw CheckpointError("unsupported checkpoint version " + j.at("version").dump());
    const auto& m = j.at("model");
    ModelConfig cfg;
    cfg.feature_dim = m.at("feature_dim").get<int>();
    cfg.encoder.layers = m.at("layers").get<int>();
    cfg.encoder.hidden_dim = m.at("hidden_dim").get<int>();
    cfg.encoder.batch_norm = m.at("batch_norm").get<bool>();
    cfg.seed = m.at("seed").get<std::uint64_t>();
    MvgibModel model(cfg);

    const auto& tensors = j.at("tensors");
    ParamList params = model.parameters();
    if (tensors.size() != params.size())
      throw CheckpointError("checkpoint holds " + std::to_string(tensors.size()) + " tensors, model expects " +
                            std::to_string(params.size()));
    for (Param* p : params) {
      auto it = tensors.find(p->name);
      if (it == tensors.end()) throw CheckpointError("checkpoint is missing tensor '" + p->name + "'");
      const auto rows = it->at("rows").get<Eigen::Index>();
      const auto cols = it->at("cols").get<Eigen::Index>();
      const auto data = it->at("data").get<std::vector<double>>();
      if (rows != p->value.rows() || cols != p->value.cols() || static_cast<Eigen::Index>(data.size()) != rows * cols)
        throw CheckpointError("shape mismatch for tensor '" + p->name + "'");
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) p->value(r, c) = data[static_cast<std::size_t>(r * cols + c)];
    }
    if (info) {
      info->model = cfg;
      info->metadata = j.value("metadata", std::map<std::string, std::string>{});
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("invalid model configuration in checkpoint: ") + e.what());
  }
}

inline MvgibModel load_checkpoint(const std::filesystem::path& path, Checkpoint* info = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return model_from_bytes(bytes, info);
}

}  // namespace mvgib
