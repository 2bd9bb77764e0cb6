#include "weakpark/pairnet.hpp"

#include <json.hpp>

#include "weakpark/io.hpp"

namespace weakpark {

namespace {
using nlohmann::json;
using ojson = nlohmann::ordered_json;

constexpr const char* kCheckpointFormat = "weakpark-pairnet-v1";

ojson config_json(const EncoderConfig& c) {
  return {{"bands", c.bands},
          {"side", c.side},
          {"channels", c.channels},
          {"embedding_dim", c.embedding_dim},
          {"head_hidden", c.head_hidden}};
}

EncoderConfig config_from_json(const json& j) {
  EncoderConfig c;
  c.bands = j.at("bands").get<int>();
  c.side = j.at("side").get<int>();
  c.channels = j.at("channels").get<std::vector<int>>();
  c.embedding_dim = j.at("embedding_dim").get<int>();
  c.head_hidden = j.at("head_hidden").get<int>();
  return c;
}

std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}
}  // namespace

void EncoderConfig::validate() const {
  require(bands > 0, "encoder bands must be positive");
  require(!channels.empty(), "encoder needs at least one conv block");
  for (int c : channels) require(c > 0, "conv block channel counts must be positive");
  require(embedding_dim == kEmbeddingDim, "embedding dimension is fixed at 128");
  require(head_hidden > 0, "head width must be positive");
  require(channels.size() < 31 && side >= (1 << channels.size()),
          "input side must be at least 2^(number of conv blocks)");
}

void TrainConfig::validate() const {
  require(learning_rate > 0.0, "learning rate must be positive");
  require(epochs >= 0, "epochs must be non-negative");
  require(batch_size > 0, "batch size must be positive");
  require(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0, "Adam betas must lie in (0,1)");
  require(epsilon > 0.0, "Adam epsilon must be positive");
  require(threads > 0, "thread count must be positive");
}

std::vector<TensorSpec> parameter_layout(const EncoderConfig& config) {
  config.validate();
  std::vector<TensorSpec> out;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::vector<int> shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    out.push_back({std::move(name), std::move(shape), offset, n});
    offset += n;
  };
  int cin = config.bands;
  for (std::size_t i = 0; i < config.channels.size(); ++i) {
    const int cout = config.channels[i];
    const std::string p = "encoder.conv" + std::to_string(i);
    add(p + ".weight", {cout, cin, 3, 3});
    add(p + ".bias", {cout});
    cin = cout;
  }
  add("encoder.proj.weight", {config.embedding_dim, cin});
  add("encoder.proj.bias", {config.embedding_dim});
  add("head.fc1.weight", {config.head_hidden, config.embedding_dim});
  add("head.fc1.bias", {config.head_hidden});
  add("head.fc2.weight", {1, config.head_hidden});
  add("head.fc2.bias", {1});
  return out;
}

std::string epoch_record_json(const EpochRecord& r) {
  ojson j = {{"epoch", r.epoch}, {"mean_loss", r.mean_loss}, {"wall_ms", r.wall_ms}};
  return j.dump();
}

std::vector<float> prepare_input(std::span<const float> normalized, int bands,
                                 const Footprint& footprint, int side) {
  require(side > 0, "target side must be positive");
  const int H = footprint.height, W = footprint.width;
  require(normalized.size() == static_cast<std::size_t>(bands) * H * W,
          "normalized chip does not match footprint shape", ErrorKind::kShape);
  const Footprint::Box box = footprint.bounding_box();
  const int sq = std::max(box.rows, box.cols);
  const int pad_r = (sq - box.rows) / 2;
  const int pad_c = (sq - box.cols) / 2;
  const std::size_t sq_plane = static_cast<std::size_t>(sq) * sq;
  std::vector<float> square(static_cast<std::size_t>(bands) * sq_plane, 0.0f);
  for (int b = 0; b < bands; ++b) {
    for (int r = 0; r < box.rows; ++r) {
      for (int c = 0; c < box.cols; ++c) {
        const int sr = box.row0 + r, sc = box.col0 + c;
        if (!footprint.at(sr, sc)) continue;
        square[b * sq_plane + static_cast<std::size_t>(r + pad_r) * sq + (c + pad_c)] =
            normalized[static_cast<std::size_t>(b) * H * W + static_cast<std::size_t>(sr) * W + sc];
      }
    }
  }
  std::vector<float> out(static_cast<std::size_t>(bands) * side * side);
  const double scale = static_cast<double>(sq) / side;
  auto sample_coord = [&](int i, int& i0, int& i1, double& w) {
    double y = (i + 0.5) * scale - 0.5;
    y = std::clamp(y, 0.0, static_cast<double>(sq - 1));
    i0 = static_cast<int>(std::floor(y));
    i1 = std::min(i0 + 1, sq - 1);
    w = y - i0;
  };
  for (int i = 0; i < side; ++i) {
    int y0, y1;
    double wy;
    sample_coord(i, y0, y1, wy);
    for (int j = 0; j < side; ++j) {
      int x0, x1;
      double wx;
      sample_coord(j, x0, x1, wx);
      for (int b = 0; b < bands; ++b) {
        const float* q = square.data() + b * sq_plane;
        const double v00 = q[static_cast<std::size_t>(y0) * sq + x0];
        const double v01 = q[static_cast<std::size_t>(y0) * sq + x1];
        const double v10 = q[static_cast<std::size_t>(y1) * sq + x0];
        const double v11 = q[static_cast<std::size_t>(y1) * sq + x1];
        const double top = v00 + (v01 - v00) * wx;
        const double bot = v10 + (v11 - v10) * wx;
        out[static_cast<std::size_t>(b) * side * side + static_cast<std::size_t>(i) * side + j] =
            static_cast<float>(top + (bot - top) * wy);
      }
    }
  }
  return out;
}

void save_checkpoint(const PairNetParams<float>& params, const CheckpointMeta& meta,
                     const std::filesystem::path& dir) {
  const std::string bin = encode_f32_le(params.values());
  ojson tensors = ojson::array();
  for (const auto& s : params.layout()) {
    tensors.push_back({{"name", s.name}, {"shape", s.shape}, {"offset", s.offset * 4}});
  }
  ojson manifest = {{"format", kCheckpointFormat},
                    {"config", config_json(params.config())},
                    {"tensors", tensors},
                    {"seed", meta.seed},
                    {"total_bytes", bin.size()},
                    {"checksum_fnv1a64", hex64(fnv1a64(bin))}};
  if (!meta.normalization.mean.empty()) {
    manifest["normalization"] = {{"mean", meta.normalization.mean},
                                 {"std", meta.normalization.stddev}};
  }
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "model.bin", bin);
  write_file_atomic(dir / "model.json", manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_file(dir / "model.json"));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("bad checkpoint manifest: ") + e.what());
  }
  EncoderConfig config;
  CheckpointMeta meta;
  std::uint64_t total = 0;
  std::string checksum;
  try {
    require(manifest.at("format").get<std::string>() == kCheckpointFormat,
            "unknown checkpoint format", ErrorKind::kIntegrity);
    config = config_from_json(manifest.at("config"));
    meta.seed = manifest.at("seed").get<std::uint64_t>();
    total = manifest.at("total_bytes").get<std::uint64_t>();
    checksum = manifest.at("checksum_fnv1a64").get<std::string>();
    if (manifest.contains("normalization")) {
      meta.normalization.mean = manifest["normalization"].at("mean").get<std::vector<double>>();
      meta.normalization.stddev = manifest["normalization"].at("std").get<std::vector<double>>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("bad checkpoint manifest: ") + e.what());
  }
  PairNetParams<float> params(config);
  const auto& tensors = manifest.at("tensors");
  require(tensors.is_array() && tensors.size() == params.layout().size(),
          "checkpoint manifest lists " + std::to_string(tensors.size()) + " tensors, config implies " +
              std::to_string(params.layout().size()),
          ErrorKind::kShape);
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const TensorSpec& want = params.layout()[i];
    const auto name = tensors[i].at("name").get<std::string>();
    const auto shape = tensors[i].at("shape").get<std::vector<int>>();
    const auto offset = tensors[i].at("offset").get<std::size_t>();
    if (name != want.name || shape != want.shape || offset != want.offset * 4) {
      throw Error(ErrorKind::kShape, "checkpoint tensor '" + name + "' has shape " +
                                         shape_str(shape) + " at byte " + std::to_string(offset) +
                                         ", expected '" + want.name + "' " +
                                         shape_str(want.shape) + " at byte " +
                                         std::to_string(want.offset * 4));
    }
  }
  const std::string bin = read_file(dir / "model.bin");
  if (bin.size() != total || bin.size() != params.size() * 4) {
    throw Error(ErrorKind::kIntegrity, "model.bin is " + std::to_string(bin.size()) +
                                           " bytes, manifest expects " + std::to_string(total));
  }
  if (hex64(fnv1a64(bin)) != checksum) {
    throw Error(ErrorKind::kIntegrity, "model.bin checksum mismatch");
  }
  const auto values = decode_f32_le(bin);
  std::copy(values.begin(), values.end(), params.values().begin());
  return {std::move(params), std::move(meta)};
}

}  // namespace weakpark
