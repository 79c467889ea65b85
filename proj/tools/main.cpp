// Copyright 2026  The tse authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Command-line front door: gen, train, eval, extract, bench.
// Exit codes: 0 success, 1 runtime failure, 2 configuration error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tse/bench.hpp"
#include "tse/runconfig.hpp"
#include "tse/synth.hpp"
#include "tse/train.hpp"

namespace fs = std::filesystem;

namespace {

// Raised during preflight: bad flags, bad config file, unusable --out.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void ensure_writable_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw ConfigError("cannot create output directory '" + dir +
                      "': " + ec.message());
  const fs::path probe = fs::path(dir) / ".tse_write_probe";
  std::ofstream f(probe);
  if (!f) throw ConfigError("output directory '" + dir + "' is not writable");
  f.close();
  fs::remove(probe, ec);
}

tse::AdaptationKind parse_adaptation(const std::string& s) {
  if (s == "sa") return tse::AdaptationKind::sa;
  if (s == "asa") return tse::AdaptationKind::asa;
  if (s == "none") return tse::AdaptationKind::none;
  throw ConfigError("unknown adaptation '" + s + "' (use sa|asa|none)");
}

tse::ChannelMode parse_channels(const std::string& s) {
  if (s == "single") return tse::ChannelMode::single;
  if (s == "parallel") return tse::ChannelMode::parallel_2ch;
  if (s == "ipd") return tse::ChannelMode::ipd_2ch;
  throw ConfigError("unknown channel mode '" + s +
                    "' (use single|parallel|ipd)");
}

struct GenArgs {
  tse::DatasetSpec defaults;
  std::string out;
  std::uint64_t seed = defaults.master_seed;
  int speakers = defaults.num_speakers;
  int utts_per_speaker = defaults.utts_per_speaker;
  int channels = defaults.channels;
  double duration = defaults.duration_s;
  double adaptation_duration = defaults.adaptation_duration_s;
  double sir_min = defaults.sir_min, sir_max = defaults.sir_max;
  double rt60_min = defaults.rt60_min, rt60_max = defaults.rt60_max;
  double f0_min = defaults.f0_min, f0_max = defaults.f0_max;
};

int cmd_gen(const GenArgs& a) {
  ensure_writable_dir(a.out);
  tse::DatasetSpec spec;
  spec.num_speakers = a.speakers;
  spec.utts_per_speaker = a.utts_per_speaker;
  spec.channels = a.channels;
  spec.duration_s = a.duration;
  spec.adaptation_duration_s = a.adaptation_duration;
  spec.sir_min = a.sir_min;
  spec.sir_max = a.sir_max;
  spec.rt60_min = a.rt60_min;
  spec.rt60_max = a.rt60_max;
  spec.f0_min = a.f0_min;
  spec.f0_max = a.f0_max;
  spec.master_seed = a.seed;
  try {
    tse::Dataset ds = tse::gen_dataset(spec, a.out);
    std::cout << "wrote " << ds.train.size() << " train / " << ds.val.size()
              << " val / " << ds.test.size() << " test mixtures to " << a.out
              << "\n";
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return 0;
}

struct TrainArgs {
  std::string data = "data";
  std::string out;
  std::string config;
  std::string adaptation, channels, pooling;
  int pool_size = -1;
  bool sqrt_scale = false;
  double alpha = -1.0, lr = -1.0;
  int epochs = -1, batch = -1, patience = -1, num_speakers = -1;
  std::int64_t seed = -1;
};

tse::RunConfig merge_train_config(const TrainArgs& a) {
  tse::RunConfig cfg;
  if (!a.config.empty()) {
    try {
      cfg = tse::load_run_config(a.config);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  cfg.data_dir = a.data;
  if (!a.adaptation.empty())
    cfg.model.adaptation = parse_adaptation(a.adaptation);
  if (!a.channels.empty()) cfg.model.channels = parse_channels(a.channels);
  if (!a.pooling.empty()) {
    if (a.pooling == "mean")
      cfg.model.asa.pooling = tse::AsaConfig::Pooling::mean;
    else if (a.pooling == "none")
      cfg.model.asa.pooling = tse::AsaConfig::Pooling::none;
    else
      throw ConfigError("unknown pooling '" + a.pooling + "' (use mean|none)");
  }
  if (a.pool_size > 0) cfg.model.asa.pool_size = a.pool_size;
  if (a.sqrt_scale) cfg.model.asa.sqrt_scale = true;
  if (a.num_speakers >= 0) cfg.model.num_speakers = a.num_speakers;
  if (a.alpha >= 0) cfg.train.alpha = a.alpha;
  if (a.lr > 0) cfg.train.lr = a.lr;
  if (a.epochs > 0) cfg.train.max_epochs = a.epochs;
  if (a.batch > 0) cfg.train.batch_size = a.batch;
  if (a.patience > 0) cfg.train.patience = a.patience;
  if (a.seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(a.seed);
  try {
    cfg.model.validate();
    cfg.train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

int cmd_train(const TrainArgs& a) {
  tse::RunConfig cfg = merge_train_config(a);
  ensure_writable_dir(a.out);
  const fs::path data(cfg.data_dir);
  if (!fs::exists(data / cfg.train_manifest))
    throw ConfigError("missing training manifest " +
                      (data / cfg.train_manifest).string());
  auto train_recs = tse::read_manifest((data / cfg.train_manifest).string());
  std::vector<tse::MixtureRecord> val_recs;
  if (fs::exists(data / cfg.val_manifest))
    val_recs = tse::read_manifest((data / cfg.val_manifest).string());

  const std::string ckpt = (fs::path(a.out) / "model.tseckpt").string();
  std::ofstream log((fs::path(a.out) / "train.log").string());
  tse::TrainResult res = tse::train(cfg.model, cfg.train, train_recs, val_recs,
                                    cfg.data_dir, ckpt, &log);
  std::cout << "best epoch " << res.best_epoch << ", validation SiSDR "
            << "improvement " << tse::detail::fmt6(res.best_val)
            << " dB\ncheckpoint: " << ckpt << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data = "data";
  std::string split = "test";
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  if (a.split != "train" && a.split != "val" && a.split != "test")
    throw ConfigError("unknown split '" + a.split + "'");
  if (!fs::exists(a.checkpoint))
    throw ConfigError("checkpoint '" + a.checkpoint + "' does not exist");
  if (!a.out.empty()) ensure_writable_dir(a.out);
  const fs::path manifest = fs::path(a.data) / (a.split + ".tsv");
  if (!fs::exists(manifest))
    throw ConfigError("missing manifest " + manifest.string());
  tse::Model model = tse::load_checkpoint(a.checkpoint);
  auto records = tse::read_manifest(manifest.string());
  tse::EvalReport report = tse::evaluate(model, records, a.data);
  std::cout << report.table();
  if (!a.out.empty()) {
    const std::string csv =
        (fs::path(a.out) / ("eval_" + a.split + ".csv")).string();
    std::ofstream f(csv, std::ios::binary);
    f << report.to_csv();
    std::cout << "wrote " << csv << "\n";
  }
  return 0;
}

struct ExtractArgs {
  std::string mixture, adaptation, checkpoint, out;
};

int cmd_extract(const ExtractArgs& a) {
  for (const auto& [path, what] :
       {std::pair<const std::string&, const char*>{a.mixture, "mixture"},
        {a.adaptation, "adaptation"},
        {a.checkpoint, "checkpoint"}})
    if (!fs::exists(path))
      throw ConfigError(std::string(what) + " file '" + path +
                        "' does not exist");
  if (a.out.empty()) throw ConfigError("--out is required");
  if (fs::path(a.out).has_parent_path())
    ensure_writable_dir(fs::path(a.out).parent_path().string());

  tse::Model model = tse::load_checkpoint(a.checkpoint);
  tse::AudioFile mix = tse::read_wav(a.mixture);
  tse::Waveform adapt = tse::read_wav_mono(a.adaptation);
  const std::size_t want =
      model.config().channels == tse::ChannelMode::single ? 1 : 2;
  if (mix.channels.size() < want)
    throw ConfigError("model needs " + std::to_string(want) +
                      " channel(s) but '" + a.mixture + "' has " +
                      std::to_string(mix.channels.size()));
  mix.channels.resize(want);

  tse::NoGradGuard ng;
  tse::Model::Forward f = model.forward_extract(mix.channels, adapt);
  tse::Waveform est{{f.estimate.values().begin(), f.estimate.values().end()},
                    mix.channels[0].sample_rate};
  tse::write_wav(a.out, {est}, tse::WavEncoding::float32);
  std::cout << "wrote " << a.out << " (" << est.duration_s() << " s)\n";
  if (f.attention_weights.defined()) {
    const std::string sidecar = a.out + ".attention.csv";
    std::ofstream side(sidecar, std::ios::binary);
    side << "group,weight\n";
    for (int g = 0; g < f.attention_weights.size(); ++g)
      side << g << ',' << tse::detail::fmt6(f.attention_weights.at(g)) << '\n';
    std::cout << "wrote " << sidecar << "\n";
  }
  return 0;
}

struct BenchArgs {
  int n = 64, t = 3199, m = 20, reps = 50;
};

int cmd_bench(const BenchArgs& a) {
  if (a.n < 1 || a.t < 1 || a.m < 1 || a.reps < 1)
    throw ConfigError("bench sizes must be positive");
  std::cout << tse::bench_attention(a.n, a.t, a.m, a.reps).table();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  tse::tune_allocator();
  CLI::App app{"time-domain target speech extraction with attention-based "
               "scaling adaptation"};
  app.require_subcommand(1);

  GenArgs gen;
  CLI::App* gen_cmd =
      app.add_subcommand("gen", "generate a synthetic two-speaker corpus");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "master seed");
  gen_cmd->add_option("--speakers", gen.speakers, "number of speakers");
  gen_cmd->add_option("--utts-per-speaker", gen.utts_per_speaker,
                      "utterance pool per speaker");
  gen_cmd->add_option("--channels", gen.channels, "1 or 2 channel mixtures");
  gen_cmd->add_option("--duration", gen.duration, "mixture seconds");
  gen_cmd->add_option("--adaptation-duration", gen.adaptation_duration,
                      "enrollment seconds");
  gen_cmd->add_option("--sir-min", gen.sir_min, "lowest SIR in dB");
  gen_cmd->add_option("--sir-max", gen.sir_max, "highest SIR in dB");
  gen_cmd->add_option("--rt60-min", gen.rt60_min, "lowest RT60 in s");
  gen_cmd->add_option("--rt60-max", gen.rt60_max, "highest RT60 in s");
  gen_cmd->add_option("--f0-min", gen.f0_min, "lowest speaker f0 in Hz");
  gen_cmd->add_option("--f0-max", gen.f0_max, "highest speaker f0 in Hz");

  TrainArgs tr;
  CLI::App* train_cmd = app.add_subcommand("train", "train an extractor");
  train_cmd->add_option("--data", tr.data, "corpus directory");
  train_cmd->add_option("--out", tr.out, "output directory")->required();
  train_cmd->add_option("--config", tr.config, "JSON run configuration");
  train_cmd->add_option("--adaptation", tr.adaptation, "sa|asa|none");
  train_cmd->add_option("--channels", tr.channels, "single|parallel|ipd");
  train_cmd->add_option("--pooling", tr.pooling, "mean|none");
  train_cmd->add_option("--pool-size", tr.pool_size, "ASA pooling size M");
  train_cmd->add_flag("--sqrt-scale", tr.sqrt_scale,
                      "scale the attention bias matrix by sqrt(N)");
  train_cmd->add_option("--alpha", tr.alpha, "MTL cross-entropy weight");
  train_cmd->add_option("--num-speakers", tr.num_speakers,
                        "classification head size");
  train_cmd->add_option("--lr", tr.lr, "Adam learning rate");
  train_cmd->add_option("--epochs", tr.epochs, "max epochs");
  train_cmd->add_option("--batch", tr.batch, "batch size");
  train_cmd->add_option("--patience", tr.patience, "early-stop patience");
  train_cmd->add_option("--seed", tr.seed, "training seed");

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "checkpoint path")
      ->required();
  eval_cmd->add_option("--data", ev.data, "corpus directory");
  eval_cmd->add_option("--split", ev.split, "train|val|test");
  eval_cmd->add_option("--out", ev.out, "directory for the CSV report");

  ExtractArgs ex;
  CLI::App* extract_cmd =
      app.add_subcommand("extract", "extract the target speaker");
  extract_cmd->add_option("--mixture", ex.mixture, "mixture wav")->required();
  extract_cmd->add_option("--adaptation", ex.adaptation, "adaptation wav")
      ->required();
  extract_cmd->add_option("--checkpoint", ex.checkpoint, "checkpoint path")
      ->required();
  extract_cmd->add_option("--out", ex.out, "output wav")->required();

  BenchArgs be;
  CLI::App* bench_cmd =
      app.add_subcommand("bench", "attention cost benchmark");
  bench_cmd->add_option("--N", be.n, "embedding channels");
  bench_cmd->add_option("--T", be.t, "frames before pooling");
  bench_cmd->add_option("--M", be.m, "pooling size");
  bench_cmd->add_option("--reps", be.reps, "timing repetitions");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exits 0
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << std::flush;
    return 2;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen(gen);
    if (train_cmd->parsed()) return cmd_train(tr);
    if (eval_cmd->parsed()) return cmd_eval(ev);
    if (extract_cmd->parsed()) return cmd_extract(ex);
    if (bench_cmd->parsed()) return cmd_bench(be);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
