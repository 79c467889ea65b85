// Copyright 2026  The tse authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef TSE_TRAIN_HPP_
#define TSE_TRAIN_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "tse/adaptation.hpp"
#include "tse/losses.hpp"
#include "tse/network.hpp"
#include "tse/signal.hpp"
#include "tse/synth.hpp"

namespace tse {

// The graph allocates and frees MB-sized buffers every step; keeping them on
// the heap instead of mmap roughly halves step time under glibc.
inline void tune_allocator() {
#if defined(__GLIBC__)
  static bool done = false;
  if (!done) {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    done = true;
  }
#endif
}

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 4;
  int max_epochs = 30;
  double grad_clip = 5.0;  // global L2 norm
  int patience = 5;        // epochs without validation improvement
  std::uint64_t seed = 1;
  double alpha = 0.0;  // MTL weight; 0 = SiSDR only

  void validate() const {
    if (lr <= 0 || batch_size < 1 || max_epochs < 1 || grad_clip <= 0 ||
        patience < 1 || alpha < 0)
      throw std::invalid_argument("TrainConfig: all settings must be positive");
  }
};

class Adam {
 public:
  Adam(ParamRegistry& params, const TrainConfig& cfg)
      : params_(params), cfg_(cfg) {
    for (const auto& [name, t] : params.entries()) {
      m_.emplace_back(t.size(), 0.0);
      v_.emplace_back(t.size(), 0.0);
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    std::size_t pi = 0;
    for (auto& [name, t] : params_.entries()) {
      Tensor& tensor = *params_.find(name);
      if (tensor.has_grad()) {
        auto vals = tensor.mutable_values();
        auto grads = tensor.grad();
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (std::size_t i = 0; i < vals.size(); ++i) {
          const double g = grads[i];
          m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
          v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
          vals[i] -= cfg_.lr * (m[i] / bc1) /
                     (std::sqrt(v[i] / bc2) + cfg_.adam_eps);
        }
      }
      ++pi;
    }
  }

 private:
  ParamRegistry& params_;
  TrainConfig cfg_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Scales all gradients so their joint L2 norm is at most max_norm.
inline double clip_global_norm(ParamRegistry& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, t] : params.entries())
    if (t.has_grad())
      for (double g : t.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& [name, t] : params.entries()) {
      Tensor& tensor = *params.find(name);
      if (tensor.has_grad())
        for (double& g : tensor.node->grad) g *= s;
    }
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct RecordEval {
  std::string mixture_path;
  std::string tag;
  double sisdr_mix = 0.0;   // raw mixture against the reference
  double sisdr_est = 0.0;   // estimate against the reference
  double improvement = 0.0;
  std::optional<double> attention_entropy;
};

struct EvalAggregate {
  int count = 0;
  double mean_mix = 0.0;
  double mean_est = 0.0;
  double mean_improvement = 0.0;
};

struct EvalReport {
  std::vector<RecordEval> records;
  EvalAggregate all, hard, easy;
  std::optional<double> mean_entropy;

  std::string to_csv() const {
    std::ostringstream os;
    os << "mixture,tag,sisdr_mix,sisdr_est,improvement,entropy\n";
    for (const RecordEval& r : records) {
      os << r.mixture_path << ',' << r.tag << ',' << detail::fmt6(r.sisdr_mix)
         << ',' << detail::fmt6(r.sisdr_est) << ','
         << detail::fmt6(r.improvement) << ','
         << (r.attention_entropy ? detail::fmt6(*r.attention_entropy) : "")
         << '\n';
    }
    const std::pair<const char*, const EvalAggregate*> aggs[] = {
        {"all", &all}, {"hard", &hard}, {"easy", &easy}};
    for (const auto& [name, agg] : aggs)
      os << "#agg," << name << ',' << agg->count << ','
         << detail::fmt6(agg->mean_mix) << ',' << detail::fmt6(agg->mean_est)
         << ',' << detail::fmt6(agg->mean_improvement) << '\n';
    return os.str();
  }

  // Human-oriented fixed-width view of the aggregates.
  std::string table() const {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof line, "%-6s %6s %12s %12s %12s\n", "cond",
                  "count", "sisdr_mix", "sisdr_est", "improv");
    os << line;
    const std::pair<const char*, const EvalAggregate*> aggs[] = {
        {"hard", &hard}, {"easy", &easy}, {"all", &all}};
    for (const auto& [name, agg] : aggs) {
      std::snprintf(line, sizeof line, "%-6s %6d %12.3f %12.3f %12.3f\n",
                    name, agg->count, agg->mean_mix, agg->mean_est,
                    agg->mean_improvement);
      os << line;
    }
    if (mean_entropy) {
      std::snprintf(line, sizeof line, "mean attention entropy: %.4f nats\n",
                    *mean_entropy);
      os << line;
    }
    return os.str();
  }
};

struct LoadedRecord {
  std::vector<Waveform> mixture;
  Waveform target;
  Waveform adaptation;
  int speaker = -1;
  std::string tag;
  std::string mixture_path;
};

inline LoadedRecord load_record(const MixtureRecord& rec,
                                const std::string& base_dir) {
  namespace fs = std::filesystem;
  LoadedRecord out;
  AudioFile mix = read_wav((fs::path(base_dir) / rec.mixture_path).string());
  out.mixture = std::move(mix.channels);
  out.target = read_wav_mono((fs::path(base_dir) / rec.target_path).string());
  out.adaptation =
      read_wav_mono((fs::path(base_dir) / rec.adaptation_path).string());
  out.speaker = rec.target_speaker;
  out.tag = rec.tag;
  out.mixture_path = rec.mixture_path;
  return out;
}

// Extractor signature: mixture channels + adaptation -> estimate and an
// optional attention-entropy diagnostic.
using ExtractFn = std::function<std::pair<Waveform, std::optional<double>>(
    const std::vector<Waveform>&, const Waveform&)>;

inline EvalReport evaluate_records(const std::vector<MixtureRecord>& records,
                                   const std::string& base_dir,
                                   const ExtractFn& extract) {
  EvalReport report;
  auto fold = [](EvalAggregate& agg, const RecordEval& r) {
    ++agg.count;
    agg.mean_mix += r.sisdr_mix;
    agg.mean_est += r.sisdr_est;
    agg.mean_improvement += r.improvement;
  };
  double entropy_sum = 0.0;
  int entropy_count = 0;
  for (const MixtureRecord& rec : records) {
    LoadedRecord data = load_record(rec, base_dir);
    auto [estimate, entropy] = extract(data.mixture, data.adaptation);
    RecordEval ev;
    ev.mixture_path = rec.mixture_path;
    ev.tag = rec.tag;
    ev.sisdr_mix = sisdr(data.mixture[0], data.target);
    ev.sisdr_est = sisdr(estimate, data.target);
    ev.improvement = ev.sisdr_est - ev.sisdr_mix;
    ev.attention_entropy = entropy;
    if (entropy) {
      entropy_sum += *entropy;
      ++entropy_count;
    }
    fold(report.all, ev);
    fold(ev.tag == "hard" ? report.hard : report.easy, ev);
    report.records.push_back(std::move(ev));
  }
  for (EvalAggregate* agg : {&report.all, &report.hard, &report.easy})
    if (agg->count > 0) {
      agg->mean_mix /= agg->count;
      agg->mean_est /= agg->count;
      agg->mean_improvement /= agg->count;
    }
  if (entropy_count > 0) report.mean_entropy = entropy_sum / entropy_count;
  return report;
}

inline ExtractFn model_extractor(const Model& model) {
  return [&model](const std::vector<Waveform>& mix, const Waveform& adapt) {
    NoGradGuard ng;
    Model::Forward f = model.forward_extract(mix, adapt);
    Waveform est{{f.estimate.values().begin(), f.estimate.values().end()},
                 mix[0].sample_rate};
    std::optional<double> entropy;
    if (f.attention_weights.defined())
      entropy = attention_entropy(f.attention_weights);
    return std::make_pair(std::move(est), entropy);
  };
}

inline ExtractFn identity_extractor() {
  return [](const std::vector<Waveform>& mix, const Waveform&) {
    return std::make_pair(mix[0], std::optional<double>{});
  };
}

inline EvalReport evaluate(const Model& model,
                           const std::vector<MixtureRecord>& records,
                           const std::string& base_dir) {
  tune_allocator();
  return evaluate_records(records, base_dir, model_extractor(model));
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_sisdr_improvement = 0.0;
  double seconds = 0.0;
};

// Divergence gate: a non-finite loss aborts training with a dump of the
// batch that produced it.
inline void check_batch_finite(const std::vector<std::string>& paths,
                               const std::vector<double>& losses, int epoch,
                               std::ostream* log_stream) {
  if (std::isfinite(losses.back())) return;
  std::ostringstream os;
  os << "train: loss diverged in epoch " << epoch << "; last batch:\n";
  for (std::size_t k = 0; k < paths.size(); ++k)
    os << "  " << paths[k] << "\tloss=" << losses[k] << "\n";
  if (log_stream) *log_stream << os.str() << std::flush;
  throw NumericError(os.str());
}

struct TrainResult {
  std::vector<EpochLog> log;
  int best_epoch = -1;
  double best_val = 0.0;
  std::string checkpoint_path;
};

// Minimizes the objective over the training split, logs one line per epoch,
// keeps the best-validation checkpoint, and stops early once validation
// SiSDR improvement has not improved for `patience` epochs. Deterministic
// for a fixed seed: single-threaded, fixed reduction and batch order.
inline TrainResult train(const NetConfig& net_cfg, const TrainConfig& cfg,
                         const std::vector<MixtureRecord>& train_records,
                         const std::vector<MixtureRecord>& val_records,
                         const std::string& base_dir,
                         const std::string& checkpoint_path,
                         std::ostream* log_stream = nullptr) {
  tune_allocator();
  cfg.validate();
  net_cfg.validate();
  if (train_records.empty())
    throw std::invalid_argument("train: empty training manifest");
  if (cfg.alpha > 0.0) {
    if (net_cfg.num_speakers <= 0)
      throw std::invalid_argument(
          "train: MTL (alpha > 0) requires num_speakers in the model config");
    for (const MixtureRecord& r : train_records)
      if (r.target_speaker < 0 || r.target_speaker >= net_cfg.num_speakers)
        throw std::invalid_argument(
            "train: speaker id " + std::to_string(r.target_speaker) +
            " outside the classification head");
  }

  Model model(net_cfg, cfg.seed);
  Adam opt(model.params(), cfg);
  Rng shuffle_rng = Rng(cfg.seed).fork(0x5471);

  std::vector<LoadedRecord> train_data;
  train_data.reserve(train_records.size());
  for (const MixtureRecord& r : train_records)
    train_data.push_back(load_record(r, base_dir));
  std::vector<LoadedRecord> val_data;
  val_data.reserve(val_records.size());
  for (const MixtureRecord& r : val_records)
    val_data.push_back(load_record(r, base_dir));

  auto validate = [&]() {
    NoGradGuard ng;
    if (val_data.empty()) return 0.0;
    double acc = 0.0;
    for (const LoadedRecord& rec : val_data) {
      Model::Forward f = model.forward_extract(rec.mixture, rec.adaptation);
      Waveform est{{f.estimate.values().begin(), f.estimate.values().end()},
                   rec.mixture[0].sample_rate};
      acc += sisdr(est, rec.target) - sisdr(rec.mixture[0], rec.target);
    }
    return acc / static_cast<double>(val_data.size());
  };

  TrainResult result;
  result.checkpoint_path = checkpoint_path;
  double best_val = -1e30;
  int best_epoch = -1;
  std::vector<std::size_t> order(train_data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

    double epoch_loss = 0.0;
    std::size_t done = 0;
    while (done < order.size()) {
      const std::size_t batch =
          std::min<std::size_t>(cfg.batch_size, order.size() - done);
      std::vector<std::string> batch_paths;
      std::vector<double> batch_losses;
      for (std::size_t b = 0; b < batch; ++b) {
        const LoadedRecord& rec = train_data[order[done + b]];
        Tensor speaker = model.aux_embed(rec.adaptation);
        Model::Forward f = model.forward_with_embedding(rec.mixture, speaker);
        Tensor logits;
        if (cfg.alpha > 0.0) logits = model.classify_speaker(speaker);
        LossReport rep = mtl_loss(f.estimate, waveform_tensor(rec.target),
                                  logits, rec.speaker, cfg.alpha);
        batch_paths.push_back(rec.mixture_path);
        batch_losses.push_back(rep.total_value);
        check_batch_finite(batch_paths, batch_losses, epoch, log_stream);
        scale(rep.total, 1.0 / static_cast<double>(batch)).backward();
        epoch_loss += rep.total_value;
      }
      clip_global_norm(model.params(), cfg.grad_clip);
      opt.step();
      model.params().zero_grad();
      done += batch;
    }
    epoch_loss /= static_cast<double>(order.size());

    const double val = validate();
    const auto t1 = std::chrono::steady_clock::now();
    EpochLog entry{epoch, epoch_loss, val,
                   std::chrono::duration<double>(t1 - t0).count()};
    result.log.push_back(entry);
    if (log_stream)
      *log_stream << entry.epoch << '\t' << detail::fmt6(entry.train_loss)
                  << '\t' << detail::fmt6(entry.val_sisdr_improvement) << '\t'
                  << detail::fmt6(entry.seconds) << '\n'
                  << std::flush;

    if (val > best_val) {
      best_val = val;
      best_epoch = epoch;
      save_checkpoint(checkpoint_path, model);
    }
    if (epoch - best_epoch >= cfg.patience) break;
  }
  result.best_epoch = best_epoch;
  result.best_val = best_val;
  return result;
}

}  // namespace tse

#endif  // TSE_TRAIN_HPP_
