/* Copyright 2026 The Recalprune Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "recalprune/checkpoint.h"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "recalprune/errors.h"

namespace recalprune {
namespace {

constexpr char kMagic[8] = {'R', 'E', 'C', 'A', 'L', 'P', 'R', 'N'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  template <typename U>
  void put(U v) {
    char raw[sizeof(U)];
    std::memcpy(raw, &v, sizeof(U));
    out_.append(raw, sizeof(U));
  }
  void bytes(const std::string& s) { out_ += s; }
  std::string& str() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in, size_t end) : in_(in), end_(end) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, in_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  size_t pos() const { return pos_; }

 private:
  void need(size_t n) const {
    if (pos_ + n > end_) {
      throw CheckpointError("checkpoint truncated at byte " +
                            std::to_string(pos_));
    }
  }
  const std::string& in_;
  size_t end_;
  size_t pos_ = 0;
};

void put_blob(Writer& w, const std::string& name, const Shape& shape,
              const float* data) {
  w.put<uint16_t>(static_cast<uint16_t>(name.size()));
  w.bytes(name);
  w.put<uint32_t>(static_cast<uint32_t>(shape.size()));
  for (int64_t d : shape) w.put<int64_t>(d);
  const int64_t n = shape_elements(shape);
  w.str().append(reinterpret_cast<const char*>(data),
                 static_cast<size_t>(n) * sizeof(float));
}

struct Blob {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

Blob get_blob(Reader& r) {
  Blob b;
  b.name = r.bytes(r.get<uint16_t>());
  const auto rank = r.get<uint32_t>();
  if (rank > 8) throw CheckpointError("blob '" + b.name + "' has bad rank");
  for (uint32_t i = 0; i < rank; ++i) {
    const auto d = r.get<int64_t>();
    if (d < 0) throw CheckpointError("blob '" + b.name + "' has bad shape");
    b.shape.push_back(d);
  }
  const std::string raw =
      r.bytes(static_cast<size_t>(shape_elements(b.shape)) * sizeof(float));
  b.data.resize(static_cast<size_t>(shape_elements(b.shape)));
  std::memcpy(b.data.data(), raw.data(), raw.size());
  return b;
}

std::string layer_key(size_t i, const char* what) {
  return "layer" + std::to_string(i) + "." + what;
}

}  // namespace

uint64_t fnv1a64(const void* data, size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

nlohmann::json spec_to_json(const NetworkSpec& spec) {
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerSpec& l : spec.layers) {
    nlohmann::json j;
    j["kind"] = to_string(l.kind);
    switch (l.kind) {
      case LayerKind::kConv:
        j["units"] = l.units;
        j["kernel"] = l.kernel;
        j["stride"] = l.stride;
        j["padding"] = l.padding;
        j["prunable"] = l.prunable;
        break;
      case LayerKind::kDepthwiseConv:
        j["kernel"] = l.kernel;
        j["stride"] = l.stride;
        j["padding"] = l.padding;
        break;
      case LayerKind::kFC:
        j["units"] = l.units;
        j["prunable"] = l.prunable;
        j["bias"] = l.bias;
        break;
      case LayerKind::kBatchNorm:
        j["epsilon"] = l.bn_epsilon;
        j["momentum"] = l.bn_momentum;
        break;
      default:
        break;
    }
    layers.push_back(std::move(j));
  }
  return {{"name", spec.name},
          {"input_shape", spec.input_shape},
          {"class_count", spec.class_count},
          {"layers", std::move(layers)}};
}

NetworkSpec spec_from_json(const nlohmann::json& doc) {
  try {
    NetworkSpec spec;
    spec.name = doc.at("name").get<std::string>();
    spec.input_shape = doc.at("input_shape").get<Shape>();
    spec.class_count = doc.at("class_count").get<int64_t>();
    for (const auto& j : doc.at("layers")) {
      LayerSpec l;
      l.kind = layer_kind_from_string(j.at("kind").get<std::string>());
      if (l.kind == LayerKind::kMaxPool) {
        l.kernel = 2;
        l.stride = 2;
      }
      l.units = j.value("units", int64_t{0});
      l.kernel = j.value("kernel", l.kernel);
      l.stride = j.value("stride", l.stride);
      l.padding = j.value("padding", int64_t{0});
      l.prunable = j.value("prunable", false);
      l.bias = j.value("bias", false);
      l.bn_epsilon = j.value("epsilon", 1e-5);
      l.bn_momentum = j.value("momentum", 0.9);
      spec.layers.push_back(l);
    }
    validate(spec);
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed network spec: ") + e.what());
  } catch (const ShapeError& e) {
    throw CheckpointError(std::string("invalid network spec: ") + e.what());
  }
}

nlohmann::json strategy_to_json(const PruningStrategy& strategy) {
  return {{"ratios", strategy.ratios},
          {"realized_flops_ratio", strategy.realized_flops_ratio}};
}

PruningStrategy strategy_from_json(const nlohmann::json& doc) {
  PruningStrategy s;
  s.ratios = doc.at("ratios").get<std::vector<double>>();
  s.realized_flops_ratio = doc.at("realized_flops_ratio").get<double>();
  return s;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  check_params(ckpt.spec, ckpt.params);
  Writer w;
  w.str().append(kMagic, sizeof kMagic);
  w.put<uint32_t>(kCheckpointVersion);
  const std::string spec = spec_to_json(ckpt.spec).dump(2);
  w.put<uint32_t>(static_cast<uint32_t>(spec.size()));
  w.bytes(spec);
  std::string strategy;
  if (ckpt.strategy) {
    nlohmann::json j = strategy_to_json(*ckpt.strategy);
    j["criterion"] = to_string(ckpt.criterion);
    strategy = j.dump();
  }
  w.put<uint32_t>(static_cast<uint32_t>(strategy.size()));
  w.bytes(strategy);

  uint32_t blobs = 0;
  Writer body;
  for (size_t i = 0; i < ckpt.params.size(); ++i) {
    const LayerParams<float>& p = ckpt.params[i];
    if (!p.weight.empty()) {
      put_blob(body, layer_key(i, "weight"), p.weight.shape(), p.weight.data());
      ++blobs;
    }
    if (!p.bias.empty()) {
      put_blob(body, layer_key(i, "bias"), p.bias.shape(), p.bias.data());
      ++blobs;
    }
    if (p.bn) {
      const Shape c{p.bn->channels()};
      put_blob(body, layer_key(i, "gamma"), c, p.bn->gamma.data());
      put_blob(body, layer_key(i, "beta"), c, p.bn->beta.data());
      put_blob(body, layer_key(i, "moving_mean"), c, p.bn->moving_mean.data());
      put_blob(body, layer_key(i, "moving_var"), c, p.bn->moving_var.data());
      blobs += 4;
    }
  }
  w.put<uint32_t>(blobs);
  w.bytes(body.str());
  w.put<uint64_t>(fnv1a64(w.str().data(), w.str().size()));
  return std::move(w.str());
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic + 4 + 8 ||
      std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  Reader header(bytes, bytes.size());
  header.bytes(sizeof kMagic);
  const auto version = header.get<uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError("checkpoint format version " +
                                 std::to_string(version) +
                                 " is not supported (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
  }
  const size_t body_end = bytes.size() - sizeof(uint64_t);
  uint64_t stored;
  std::memcpy(&stored, bytes.data() + body_end, sizeof stored);
  if (stored != fnv1a64(bytes.data(), body_end)) {
    throw CheckpointError("checkpoint checksum mismatch");
  }

  Reader r(bytes, body_end);
  r.bytes(sizeof kMagic + sizeof(uint32_t));
  Checkpoint ckpt;
  try {
    ckpt.spec = spec_from_json(nlohmann::json::parse(r.bytes(r.get<uint32_t>())));
    const std::string strategy = r.bytes(r.get<uint32_t>());
    if (!strategy.empty()) {
      const nlohmann::json j = nlohmann::json::parse(strategy);
      ckpt.strategy = strategy_from_json(j);
      ckpt.criterion = criterion_from_string(j.at("criterion").get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint header: ") +
                          e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("malformed checkpoint header: ") +
                          e.what());
  }

  ParamStore<float> params = init_params<float>(ckpt.spec, 0);
  const auto blob_count = r.get<uint32_t>();
  uint32_t expected = 0;
  for (auto& p : params.layers) {
    expected += (p.weight.empty() ? 0 : 1) + (p.bias.empty() ? 0 : 1) +
                (p.bn ? 4 : 0);
  }
  if (blob_count != expected) {
    throw CheckpointError("checkpoint has " + std::to_string(blob_count) +
                          " parameter blobs, spec needs " +
                          std::to_string(expected));
  }
  auto fill = [&](const Blob& b, const Shape& shape, float* dst) {
    if (b.shape != shape) {
      throw CheckpointError("blob '" + b.name + "' has shape " +
                            shape_string(b.shape) + ", expected " +
                            shape_string(shape));
    }
    std::copy(b.data.begin(), b.data.end(), dst);
  };
  auto expect_name = [](const Blob& b, const std::string& name) {
    if (b.name != name) {
      throw CheckpointError("expected blob '" + name + "', found '" + b.name +
                            "'");
    }
  };
  for (size_t i = 0; i < params.size(); ++i) {
    LayerParams<float>& p = params[i];
    if (!p.weight.empty()) {
      const Blob b = get_blob(r);
      expect_name(b, layer_key(i, "weight"));
      fill(b, p.weight.shape(), p.weight.data());
    }
    if (!p.bias.empty()) {
      const Blob b = get_blob(r);
      expect_name(b, layer_key(i, "bias"));
      fill(b, p.bias.shape(), p.bias.data());
    }
    if (p.bn) {
      const Shape c{p.bn->channels()};
      for (auto [name, vec] :
           {std::pair{"gamma", &p.bn->gamma}, std::pair{"beta", &p.bn->beta},
            std::pair{"moving_mean", &p.bn->moving_mean},
            std::pair{"moving_var", &p.bn->moving_var}}) {
        const Blob b = get_blob(r);
        expect_name(b, layer_key(i, name));
        fill(b, c, vec->data());
      }
    }
  }
  if (r.pos() != body_end) {
    throw CheckpointError("trailing bytes after the last parameter blob");
  }
  ckpt.params = std::move(params);
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint '" + path + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("short write to '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw CheckpointError("cannot move checkpoint into place at '" + path +
                          "'");
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace recalprune
