// Copyright 2026 The fna Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end over the C API.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fna/fna.h"

namespace {

using Json = nlohmann::ordered_json;

struct Owned {
  char* p = nullptr;
  ~Owned() { fna_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

int report(fna_status s) {
  if (s == FNA_OK) return 0;
  std::cerr << "error (" << fna_status_name(s) << "): " << fna_last_error() << "\n";
  return static_cast<int>(s);
}

std::string read_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw CLI::ValidationError("--config", "cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Options shared by the config-driven commands; unset flags keep the file or
// preset value.
struct RunFlags {
  std::string config_file;
  std::string preset;
  std::string data, run, checkpoint, split, q_grid, clip;
  std::optional<double> q;
  std::optional<int> epochs, batch_size, base_dim;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr_min, lr_max;
  std::optional<std::int64_t> step_size;
  bool parallel_loader = false;
  bool verbose = false;

  void add_common(CLI::App* app) {
    app->add_option("--config", config_file, "JSON run config or a stamp.json to repeat");
    app->add_option("--preset", preset, "desk, tiny or full");
    app->add_option("--data", data, "dataset root");
    app->add_option("--run", run, "run directory");
    app->add_option("--checkpoint", checkpoint, "checkpoint file (default <run>/checkpoint/best.fnackpt)");
  }
  void add_train(CLI::App* app) {
    app->add_option("--epochs", epochs);
    app->add_option("--batch-size", batch_size);
    app->add_option("--seed", seed);
    app->add_option("--lr-min", lr_min);
    app->add_option("--lr-max", lr_max);
    app->add_option("--step-size", step_size, "half period of the cyclic schedule");
    app->add_option("--base-dim", base_dim, "channels of the first stage");
    app->add_flag("--parallel-loader", parallel_loader, "prepare batches on a producer thread");
    app->add_flag("-v,--verbose", verbose);
  }

  std::string build(int threads) const {
    Json j;
    if (!config_file.empty()) {
      j = Json::parse(read_file(config_file));
      if (j.contains("config") && j.contains("command")) j = j["config"];
    } else {
      Owned d;
      if (fna_status s = fna_default_config(preset.empty() ? "desk" : preset.c_str(), &d.p); s != FNA_OK)
        throw CLI::ValidationError("--preset", fna_last_error());
      j = Json::parse(d.str());
    }
    if (!preset.empty() && !config_file.empty()) j["preset"] = preset;
    if (!data.empty()) j["data_root"] = data;
    if (!run.empty()) j["run_dir"] = run;
    if (!checkpoint.empty()) j["checkpoint"] = checkpoint;
    if (!split.empty()) j["split"] = split;
    if (!q_grid.empty()) j["q_grid"] = q_grid;
    if (!clip.empty()) j["clip"] = clip;
    if (q) j["q"] = *q;
    if (epochs) j["train"]["epochs"] = *epochs;
    if (batch_size) j["train"]["batch_size"] = *batch_size;
    if (seed) j["train"]["seed"] = *seed;
    if (lr_min) j["train"]["lr_min"] = *lr_min;
    if (lr_max) j["train"]["lr_max"] = *lr_max;
    if (step_size) j["train"]["step_size"] = *step_size;
    if (base_dim) {
      auto dims = j["model"]["stage_dims"];
      for (std::size_t i = 0; i < dims.size(); ++i) dims[i] = *base_dim << i;
      j["model"]["stage_dims"] = dims;
    }
    if (parallel_loader) j["train"]["serial"] = false;
    if (verbose) j["verbose"] = true;
    if (threads > 0) j["threads"] = threads;
    return j.dump();
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Focal-modulation audio classifier with built-in modulation-map interpretations"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(fna_version()));
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (default: OpenMP default)")
      ->check(CLI::PositiveNumber);

  auto* gen = app.add_subcommand("gen-synth", "write the synthetic tone dataset");
  std::string gen_out;
  int gen_classes = 4, gen_clips = 100;
  std::uint64_t gen_seed = 0;
  gen->add_option("--out", gen_out, "dataset root")->required();
  gen->add_option("--classes", gen_classes, "1-4");
  gen->add_option("--clips-per-class", gen_clips);
  gen->add_option("--seed", gen_seed);

  auto* ing = app.add_subcommand("ingest", "validate an ESC-50 layout and write manifest.json");
  std::string ing_root, ing_meta;
  int ing_max = 50;
  ing->add_option("--root", ing_root, "dataset root with audio/ and meta/")->required();
  ing->add_option("--meta", ing_meta, "metadata CSV (default <root>/meta/esc50.csv)");
  ing->add_option("--max-classes", ing_max);

  RunFlags train_flags, eval_flags, sweep_flags, interp_flags;
  auto* train = app.add_subcommand("train", "train a model on folds 1-3, validating on fold 4");
  train_flags.add_common(train);
  train_flags.add_train(train);

  auto* eval = app.add_subcommand("eval", "ACC / FID-I / FA on a split");
  eval_flags.add_common(eval);
  eval->add_option("--split", eval_flags.split, "train, val or test");
  eval->add_option("--q", eval_flags.q, "quantile order");

  auto* sweep = app.add_subcommand("sweep", "FID-I and FA over a grid of q");
  sweep_flags.add_common(sweep);
  sweep->add_option("--split", sweep_flags.split, "train, val or test");
  sweep->add_option("--q", sweep_flags.q_grid, "start:stop:step or a comma list");

  auto* interp = app.add_subcommand("interpret", "mask image, WAV and metadata for one clip");
  interp_flags.add_common(interp);
  interp->add_option("--clip", interp_flags.clip, "WAV file")->required();
  interp->add_option("--q", interp_flags.q, "quantile order");

  auto* spec = app.add_subcommand("spectrogram", "export the log-magnitude STFT of a WAV file");
  std::string spec_wav, spec_out;
  int spec_rate = 0;
  spec->add_option("--wav", spec_wav)->required();
  spec->add_option("--out", spec_out, ".pgm image or raw container")->required();
  spec->add_option("--rate", spec_rate, "analysis sample rate (default 16000)");

  auto* info = app.add_subcommand("info", "describe a checkpoint");
  std::string info_ckpt;
  info->add_option("--checkpoint", info_ckpt)->required();

  auto* classify = app.add_subcommand("classify", "class probabilities for a WAV file");
  std::string cls_ckpt, cls_wav;
  classify->add_option("--checkpoint", cls_ckpt)->required();
  classify->add_option("--wav", cls_wav)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (threads > 0)
      if (int rc = report(fna_set_num_threads(threads))) return rc;

    Owned out;
    fna_status s = FNA_OK;
    if (gen->parsed()) {
      s = fna_generate_synthetic(gen_out.c_str(), gen_classes, gen_clips, gen_seed, &out.p);
    } else if (ing->parsed()) {
      s = fna_ingest(ing_root.c_str(), ing_meta.empty() ? nullptr : ing_meta.c_str(), ing_max, &out.p);
      if (s == FNA_OK) {
        const Json m = Json::parse(out.str());
        std::cout << Json{{"root", m["root"]}, {"clips", m["clips"].size()},
                          {"classes", m["class_names"].size()}, {"sample_rates", m["sample_rates"]}}
                         .dump(2)
                  << "\n";
        return 0;
      }
    } else if (train->parsed()) {
      s = fna_train(train_flags.build(threads).c_str(), &out.p);
    } else if (eval->parsed()) {
      s = fna_evaluate(eval_flags.build(threads).c_str(), &out.p);
    } else if (sweep->parsed()) {
      s = fna_sweep(sweep_flags.build(threads).c_str(), &out.p);
    } else if (interp->parsed()) {
      s = fna_interpret(interp_flags.build(threads).c_str(), &out.p);
    } else if (spec->parsed()) {
      fna_spectrogram* sp = nullptr;
      s = fna_spectrogram_from_wav(spec_wav.c_str(), spec_rate, &sp);
      if (s == FNA_OK) {
        s = fna_spectrogram_save(sp, spec_out.c_str());
        std::size_t rows = 0, cols = 0;
        fna_spectrogram_shape(sp, &rows, &cols);
        fna_spectrogram_free(sp);
        if (s == FNA_OK)
          std::cout << Json{{"out", spec_out}, {"rows", rows}, {"cols", cols}}.dump(2) << "\n";
      }
      return report(s);
    } else if (info->parsed()) {
      fna_model* m = nullptr;
      s = fna_model_load(info_ckpt.c_str(), &m);
      if (s == FNA_OK) s = fna_model_info(m, &out.p);
      fna_model_free(m);
    } else if (classify->parsed()) {
      fna_model* m = nullptr;
      s = fna_model_load(cls_ckpt.c_str(), &m);
      if (s == FNA_OK) s = fna_model_info(m, &out.p);
      if (s == FNA_OK) {
        const Json mi = Json::parse(out.str());
        std::vector<double> p(mi["model"]["num_classes"].get<std::size_t>());
        std::size_t k = 0;
        s = fna_model_classify_wav(m, cls_wav.c_str(), p.data(), p.size(), &k);
        if (s == FNA_OK) {
          std::size_t best = 0;
          for (std::size_t i = 1; i < k; ++i)
            if (p[i] > p[best]) best = i;
          std::cout << Json{{"predicted_class", best}, {"probabilities", p}}.dump(2) << "\n";
        }
      }
      fna_model_free(m);
      return report(s);
    }
    if (s != FNA_OK) return report(s);
    if (out.p) std::cout << out.str() << "\n";
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
