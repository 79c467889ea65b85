// Copyright 2026  The tse authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef TSE_NETWORK_HPP_
#define TSE_NETWORK_HPP_

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tse/adaptation.hpp"
#include "tse/ops.hpp"
#include "tse/signal.hpp"
#include "tse/tensor.hpp"
#include "tse/wav.hpp"

namespace tse {

enum class AdaptationKind { sa, asa, none };
enum class ChannelMode { single, parallel_2ch, ipd_2ch };

inline std::string to_string(AdaptationKind k) {
  switch (k) {
    case AdaptationKind::sa: return "sa";
    case AdaptationKind::asa: return "asa";
    default: return "none";
  }
}
inline std::string to_string(ChannelMode m) {
  switch (m) {
    case ChannelMode::single: return "single";
    case ChannelMode::parallel_2ch: return "parallel";
    default: return "ipd";
  }
}

struct NetConfig {
  int embed_channels = 64;    // N: encoder output channels
  int kernel = 20;            // K: encoder kernel in samples
  int stride = 10;            // S: encoder hop in samples
  int bottleneck = 32;        // residual width; the adaptation layer runs here
  int hidden = 64;            // block hidden width
  int block_kernel = 3;       // P
  int blocks_per_repeat = 4;  // X; dilations 1,2,4,...
  int repeats = 2;            // R; adaptation sits between repeat 1 and 2
  int sample_rate = 8000;
  AdaptationKind adaptation = AdaptationKind::asa;
  AsaConfig asa;
  ChannelMode channels = ChannelMode::single;
  int num_speakers = 0;  // > 0 adds the speaker classification head

  void validate() const {
    if (embed_channels < 1 || kernel < 1 || stride < 1 || bottleneck < 1 ||
        hidden < 1 || block_kernel < 1 || blocks_per_repeat < 1 ||
        sample_rate < 1)
      throw std::invalid_argument("NetConfig: all sizes must be positive");
    if (repeats < 2)
      throw std::invalid_argument(
          "NetConfig: need at least two repeats; the adaptation layer sits "
          "between the first and the second");
    if (num_speakers < 0)
      throw std::invalid_argument("NetConfig: negative speaker count");
    if (asa.pool_size < 1)
      throw std::invalid_argument("NetConfig: ASA pool size must be >= 1");
  }

  // STFT bins feeding the IPD projection (32 ms window rounded to 2^k).
  int ipd_bins() const {
    const int win =
        static_cast<int>(std::lrint(32.0 * sample_rate / 1000.0));
    return static_cast<int>(next_pow2(static_cast<std::size_t>(win))) / 2 + 1;
  }
};

inline void to_json(nlohmann::json& j, const AsaConfig& c) {
  j = {{"pool_size", c.pool_size},
       {"residual", c.residual},
       {"sqrt_scale", c.sqrt_scale},
       {"pooling", c.pooling == AsaConfig::Pooling::mean ? "mean" : "none"}};
}
inline void from_json(const nlohmann::json& j, AsaConfig& c) {
  c.pool_size = j.value("pool_size", c.pool_size);
  c.residual = j.value("residual", c.residual);
  c.sqrt_scale = j.value("sqrt_scale", c.sqrt_scale);
  const std::string p = j.value("pooling", std::string("mean"));
  if (p == "mean")
    c.pooling = AsaConfig::Pooling::mean;
  else if (p == "none")
    c.pooling = AsaConfig::Pooling::none;
  else
    throw std::invalid_argument("AsaConfig: unknown pooling '" + p + "'");
}

inline void to_json(nlohmann::json& j, const NetConfig& c) {
  j = {{"embed_channels", c.embed_channels},
       {"kernel", c.kernel},
       {"stride", c.stride},
       {"bottleneck", c.bottleneck},
       {"hidden", c.hidden},
       {"block_kernel", c.block_kernel},
       {"blocks_per_repeat", c.blocks_per_repeat},
       {"repeats", c.repeats},
       {"sample_rate", c.sample_rate},
       {"adaptation", to_string(c.adaptation)},
       {"asa", c.asa},
       {"channels", to_string(c.channels)},
       {"num_speakers", c.num_speakers}};
}
inline void from_json(const nlohmann::json& j, NetConfig& c) {
  c.embed_channels = j.value("embed_channels", c.embed_channels);
  c.kernel = j.value("kernel", c.kernel);
  c.stride = j.value("stride", c.stride);
  c.bottleneck = j.value("bottleneck", c.bottleneck);
  c.hidden = j.value("hidden", c.hidden);
  c.block_kernel = j.value("block_kernel", c.block_kernel);
  c.blocks_per_repeat = j.value("blocks_per_repeat", c.blocks_per_repeat);
  c.repeats = j.value("repeats", c.repeats);
  c.sample_rate = j.value("sample_rate", c.sample_rate);
  const std::string a = j.value("adaptation", std::string("asa"));
  if (a == "sa")
    c.adaptation = AdaptationKind::sa;
  else if (a == "asa")
    c.adaptation = AdaptationKind::asa;
  else if (a == "none")
    c.adaptation = AdaptationKind::none;
  else
    throw std::invalid_argument("NetConfig: unknown adaptation '" + a + "'");
  if (j.contains("asa")) c.asa = j.at("asa").get<AsaConfig>();
  const std::string ch = j.value("channels", std::string("single"));
  if (ch == "single")
    c.channels = ChannelMode::single;
  else if (ch == "parallel")
    c.channels = ChannelMode::parallel_2ch;
  else if (ch == "ipd")
    c.channels = ChannelMode::ipd_2ch;
  else
    throw std::invalid_argument("NetConfig: unknown channel mode '" + ch + "'");
  c.num_speakers = j.value("num_speakers", c.num_speakers);
}

inline Tensor waveform_tensor(const Waveform& w) {
  return Tensor({1, static_cast<int>(w.samples.size())},
                {w.samples.begin(), w.samples.end()});
}

// The extraction network. All learnable tensors live in the registry; the
// forward pass is a pure function of them, so two models built from the same
// seed and config are interchangeable.
class Model {
 public:
  Model(NetConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(Rng::mix64(seed ^ 0x5eed5eedULL));
    const int n = cfg_.embed_channels, b = cfg_.bottleneck,
              h = cfg_.hidden, k = cfg_.kernel, p = cfg_.block_kernel;
    add_conv("encoder.weight", {n, 1, k}, rng);
    add_norm("bottleneck.norm", n);
    add_conv("bottleneck.proj.weight", {b, n, 1}, rng);
    for (int r = 0; r < cfg_.repeats; ++r)
      for (int x = 0; x < cfg_.blocks_per_repeat; ++x)
        add_block("tcn.r" + std::to_string(r) + ".x" + std::to_string(x) + ".",
                  b, h, p, rng);
    add_scalar_param("mask.prelu", 0.25);
    add_conv("mask.proj.weight", {n, b, 1}, rng);
    add_conv("decoder.weight", {n, 1, k}, rng);
    add_conv("aux.encoder.weight", {n, 1, k}, rng);
    add_norm("aux.norm", n);
    add_conv("aux.proj.weight", {b, n, 1}, rng);
    add_block("aux.block.", b, h, p, rng);
    if (cfg_.channels == ChannelMode::ipd_2ch) {
      add_conv("ipd.proj.weight", {b, cfg_.ipd_bins(), 1}, rng);
      add_conv("ipd.merge.weight", {b, 2 * b, 1}, rng);
      add_block("ipd.block.", b, h, p, rng);
    }
    if (cfg_.num_speakers > 0) {
      Tensor w = Tensor::randn({cfg_.num_speakers, b}, rng,
                               1.0 / std::sqrt(static_cast<double>(b)), true);
      registry_.add("classifier.weight", std::move(w));
    }
  }

  const NetConfig& config() const { return cfg_; }
  ParamRegistry& params() { return registry_; }
  const ParamRegistry& params() const { return registry_; }

  // Encoder: conv plus rectification; the parallel mode sums the two
  // per-channel encodings before the nonlinearity.
  Tensor encode(const std::vector<Waveform>& mix) const {
    if (mix.empty()) throw std::invalid_argument("encode: no channels");
    if (static_cast<int>(mix[0].samples.size()) < cfg_.kernel)
      throw std::invalid_argument("encode: input shorter than one encoder "
                                  "window");
    Tensor enc = conv1d(waveform_tensor(mix[0]), param("encoder.weight"),
                        cfg_.stride);
    if (cfg_.channels == ChannelMode::parallel_2ch) {
      if (mix.size() != 2)
        throw std::invalid_argument("encode: parallel mode needs 2 channels");
      if (mix[1].samples.size() != mix[0].samples.size())
        throw std::invalid_argument("encode: channel length mismatch");
      enc = add(enc, conv1d(waveform_tensor(mix[1]), param("encoder.weight"),
                            cfg_.stride));
    }
    return relu(enc);
  }

  // Auxiliary network: own encoder, one convolution block, mean over time.
  Tensor aux_embed(const Waveform& adaptation_utt) const {
    if (static_cast<int>(adaptation_utt.samples.size()) < cfg_.kernel)
      throw std::invalid_argument("aux_embed: utterance shorter than one "
                                  "encoder window");
    Tensor a = relu(conv1d(waveform_tensor(adaptation_utt),
                           param("aux.encoder.weight"), cfg_.stride));
    a = global_layer_norm(a, param("aux.norm.gain"), param("aux.norm.bias"));
    a = conv1d(a, param("aux.proj.weight"), 1);
    a = block(a, "aux.block.", 1);
    return mean_pool1d(a, a.dim(1));
  }

  struct Forward {
    Tensor estimate;           // [1 x L], same length as the input mixture
    Tensor attention_weights;  // defined only for ASA
    Tensor mask;               // sigmoid mask, [N x T]
    Tensor encoding;           // rectified encoder output, [N x T]
  };

  Forward forward_with_embedding(const std::vector<Waveform>& mix,
                                 const Tensor& speaker) const {
    const std::size_t want = cfg_.channels == ChannelMode::single ? 1 : 2;
    if (mix.size() != want)
      throw std::invalid_argument(
          "forward: channel mode '" + to_string(cfg_.channels) + "' needs " +
          std::to_string(want) + " channel(s), got " +
          std::to_string(mix.size()));
    const int in_len = static_cast<int>(mix[0].samples.size());
    Tensor y0 = encode(mix);
    const int t_frames = y0.dim(1);
    Tensor x = global_layer_norm(y0, param("bottleneck.norm.gain"),
                                 param("bottleneck.norm.bias"));
    x = conv1d(x, param("bottleneck.proj.weight"), 1);
    for (int i = 0; i < cfg_.blocks_per_repeat; ++i)
      x = block(x, "tcn.r0.x" + std::to_string(i) + ".", 1 << i);

    Tensor weights;
    switch (cfg_.adaptation) {
      case AdaptationKind::sa:
        x = scaling_adapt(x, speaker);
        break;
      case AdaptationKind::asa: {
        AsaResult res = asa_forward(x, speaker, cfg_.asa);
        x = std::move(res.output);
        weights = std::move(res.weights);
        break;
      }
      case AdaptationKind::none:
        break;
    }

    if (cfg_.channels == ChannelMode::ipd_2ch) {
      IpdFeatures feat = ipd(mix[0], mix[1]);
      Tensor f({feat.values.rows, feat.values.cols},
               std::move(feat.values.data));
      f = nearest_resample_cols(f, t_frames);
      Tensor proj = conv1d(f, param("ipd.proj.weight"), 1);
      x = concat_rows(x, proj);
      x = conv1d(x, param("ipd.merge.weight"), 1);
      x = block(x, "ipd.block.", 1);
    }

    for (int r = 1; r < cfg_.repeats; ++r)
      for (int i = 0; i < cfg_.blocks_per_repeat; ++i)
        x = block(x, "tcn.r" + std::to_string(r) + ".x" + std::to_string(i) +
                         ".",
                  1 << i);

    x = prelu(x, param("mask.prelu"));
    Tensor mask = sigmoid(conv1d(x, param("mask.proj.weight"), 1));
    Tensor masked = mul(mask, y0);
    Tensor est = conv_transpose1d(masked, param("decoder.weight"), cfg_.stride);
    const int out_len = est.dim(1);
    if (out_len > in_len)
      est = trim_cols(est, in_len);
    else if (out_len < in_len)
      est = pad_cols(est, 0, in_len - out_len);
    return {std::move(est), std::move(weights), std::move(mask),
            std::move(y0)};
  }

  Forward forward_extract(const std::vector<Waveform>& mix,
                          const Waveform& adaptation_utt) const {
    return forward_with_embedding(mix, aux_embed(adaptation_utt));
  }

  // MTL head; raw logits, softmax lives inside the CE loss.
  Tensor classify_speaker(const Tensor& speaker) const {
    const Tensor* w = find_param("classifier.weight");
    if (!w)
      throw StateError("classify_speaker: model has no classification head");
    return matmul(*w, speaker);
  }

  const Tensor& param(const std::string& name) const {
    const Tensor* t = find_param(name);
    if (!t) throw StateError("unknown parameter '" + name + "'");
    return *t;
  }

 private:
  const Tensor* find_param(const std::string& name) const {
    for (const auto& [n, t] : registry_.entries())
      if (n == name) return &t;
    return nullptr;
  }

  void add_conv(const std::string& name, const Shape& shape, Rng& rng) {
    const double fan_in =
        static_cast<double>(shape[1]) * (shape.size() > 2 ? shape[2] : 1);
    registry_.add(name,
                  Tensor::randn(shape, rng, 1.0 / std::sqrt(fan_in), true));
  }

  void add_norm(const std::string& prefix, int channels) {
    Tensor gain = Tensor::ones({channels, 1});
    gain.node->requires_grad = true;
    registry_.add(prefix + ".gain", std::move(gain));
    registry_.add(prefix + ".bias", Tensor::zeros({channels, 1}, true));
  }

  void add_scalar_param(const std::string& name, double v) {
    registry_.add(name, Tensor::scalar(v, true));
  }

  void add_block(const std::string& prefix, int b, int h, int p, Rng& rng) {
    add_conv(prefix + "in.weight", {h, b, 1}, rng);
    add_scalar_param(prefix + "in.prelu", 0.25);
    add_norm(prefix + "in.norm", h);
    add_conv(prefix + "dconv.weight", {h, h, p}, rng);
    add_scalar_param(prefix + "dconv.prelu", 0.25);
    add_norm(prefix + "dconv.norm", h);
    add_conv(prefix + "out.weight", {b, h, 1}, rng);
  }

  // Residual block: 1x1 in, PReLU, gLN, dilated conv, PReLU, gLN, 1x1 out.
  Tensor block(const Tensor& input, const std::string& prefix,
               int dilation) const {
    Tensor h = conv1d(input, param(prefix + "in.weight"), 1);
    h = prelu(h, param(prefix + "in.prelu"));
    h = global_layer_norm(h, param(prefix + "in.norm.gain"),
                          param(prefix + "in.norm.bias"));
    const int pad = dilation * (cfg_.block_kernel - 1);
    h = pad_cols(h, pad / 2, pad - pad / 2);
    h = conv1d(h, param(prefix + "dconv.weight"), 1, dilation);
    h = prelu(h, param(prefix + "dconv.prelu"));
    h = global_layer_norm(h, param(prefix + "dconv.norm.gain"),
                          param(prefix + "dconv.norm.bias"));
    h = conv1d(h, param(prefix + "out.weight"), 1);
    return add(input, h);
  }

  NetConfig cfg_;
  ParamRegistry registry_;
};

// ---------------------------------------------------------------------------
// Checkpoints: magic, JSON header (config + parameter manifest), then the
// raw little-endian 64-bit values in registry order.
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'T', 'S', 'E', 'C',
                                             'K', 'P', 'T', '1'};

inline void save_checkpoint(const std::string& path, const Model& model) {
  nlohmann::json header;
  header["format"] = 1;
  header["config"] = model.config();
  nlohmann::json params = nlohmann::json::array();
  for (const auto& [name, t] : model.params().entries())
    params.push_back({{"name", name}, {"shape", t.shape()}});
  header["params"] = std::move(params);
  const std::string hs = header.dump();

  std::ofstream fs(path, std::ios::binary);
  if (!fs) throw IoError("save_checkpoint: cannot open '" + path + "'");
  fs.write(kCheckpointMagic, 8);
  const std::uint32_t hlen = static_cast<std::uint32_t>(hs.size());
  fs.write(reinterpret_cast<const char*>(&hlen), 4);
  fs.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, t] : model.params().entries())
    fs.write(reinterpret_cast<const char*>(t.values().data()),
             static_cast<std::streamsize>(t.size() * 8));
  if (!fs) throw IoError("save_checkpoint: short write to '" + path + "'");
}

inline Model load_checkpoint(const std::string& path) {
  std::ifstream fs(path, std::ios::binary);
  if (!fs) throw IoError("load_checkpoint: cannot open '" + path + "'");
  char magic[8];
  fs.read(magic, 8);
  if (!fs || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw StateError("load_checkpoint: '" + path + "' is not a checkpoint");
  std::uint32_t hlen = 0;
  fs.read(reinterpret_cast<char*>(&hlen), 4);
  std::string hs(hlen, '\0');
  fs.read(hs.data(), hlen);
  if (!fs) throw StateError("load_checkpoint: truncated header");
  const nlohmann::json header = nlohmann::json::parse(hs);
  if (header.value("format", 0) != 1)
    throw StateError("load_checkpoint: unsupported format version");
  Model model(header.at("config").get<NetConfig>(), /*seed=*/0);

  const auto& manifest = header.at("params");
  const auto& entries = model.params().entries();
  if (manifest.size() != entries.size())
    throw StateError("load_checkpoint: parameter count mismatch (" +
                     std::to_string(manifest.size()) + " stored, " +
                     std::to_string(entries.size()) + " expected)");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::string name = manifest[i].at("name").get<std::string>();
    const Shape shape = manifest[i].at("shape").get<Shape>();
    if (name != entries[i].first)
      throw StateError("load_checkpoint: parameter '" + name +
                       "' does not match expected '" + entries[i].first + "'");
    if (shape != entries[i].second.shape())
      throw StateError("load_checkpoint: shape mismatch for '" + name +
                       "': stored " + shape_str(shape) + ", expected " +
                       shape_str(entries[i].second.shape()));
  }
  for (auto& [name, t] : model.params().entries()) {
    Tensor& mut = *model.params().find(name);
    fs.read(reinterpret_cast<char*>(mut.mutable_values().data()),
            static_cast<std::streamsize>(mut.size() * 8));
  }
  if (!fs) throw StateError("load_checkpoint: truncated parameter data");
  return model;
}

}  // namespace tse

#endif  // TSE_NETWORK_HPP_
