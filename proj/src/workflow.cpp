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

#include "fna/workflow.h"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "fna/checkpoint.h"
#include "fna/error.h"
#include "fna/parallel.h"
#include "fna/serialize.h"

namespace fna {

const char* const kCodeVersion = "0.3.0";

namespace {

std::string read_text(const std::filesystem::path& p) {
  std::ifstream f(p);
  if (!f) throw IoError("cannot open " + p.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::trunc | std::ios::binary);
  if (!f) throw IoError("cannot write " + p.string());
  f << text;
  if (!f) throw IoError("write failed: " + p.string());
}

std::string file_hash(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(bytes);
  return os.str();
}

void apply_threads(const RunConfig& cfg) {
  if (cfg.threads > 0) set_num_threads(cfg.threads);
}

Checkpoint load_model_checkpoint(const RunConfig& cfg) {
  const auto path = cfg.checkpoint_path();
  if (!std::filesystem::exists(path)) throw IoError("missing checkpoint " + path.string());
  auto c = load_checkpoint(path);
  return c;
}

std::string fixed_q(double q) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << q;
  return os.str();
}

}  // namespace

RunConfig RunConfig::from_preset(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "desk") {
    c.model = FocalNetConfig::desk();
    c.train = TrainConfig::desk();
  } else if (name == "tiny") {
    c.model = FocalNetConfig::tiny();
    c.train = TrainConfig::desk();
    c.train.epochs = 2;
  } else if (name == "full") {
    c.model = FocalNetConfig::base();
    c.train = TrainConfig::full();
  } else {
    throw ConfigError("unknown preset '" + name + "' (desk, tiny, full)");
  }
  c.preprocess.input_size = c.model.input_size;
  return c;
}

std::string RunConfig::to_json() const {
  Json j;
  j["preset"] = preset;
  j["model"] = fna::to_json(model);
  j["train"] = fna::to_json(train);
  j["preprocess"] = fna::to_json(preprocess);
  j["data_root"] = data_root.string();
  j["run_dir"] = run_dir.string();
  j["checkpoint"] = checkpoint.string();
  j["threads"] = threads;
  j["split"] = split;
  j["q"] = q;
  j["q_grid"] = q_grid;
  j["clip"] = clip.string();
  j["verbose"] = verbose;
  return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  if (j.is_object() && j.contains("config") && j.contains("command")) j = j["config"];
  if (!j.is_object()) throw ParseError("config: expected an object");
  RunConfig c = from_preset(j.value("preset", std::string("desk")));
  const bool explicit_input = j.contains("preprocess") && j["preprocess"].contains("input_size");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "preset") continue;
      else if (key == "model") merge_json(c.model, value);
      else if (key == "train") merge_json(c.train, value);
      else if (key == "preprocess") merge_json(c.preprocess, value);
      else if (key == "data_root") c.data_root = value.get<std::string>();
      else if (key == "run_dir") c.run_dir = value.get<std::string>();
      else if (key == "checkpoint") c.checkpoint = value.get<std::string>();
      else if (key == "threads") c.threads = value.get<int>();
      else if (key == "split") c.split = value.get<std::string>();
      else if (key == "q") c.q = value.get<double>();
      else if (key == "q_grid") c.q_grid = value.get<std::string>();
      else if (key == "clip") c.clip = value.get<std::string>();
      else if (key == "verbose") c.verbose = value.get<bool>();
      else throw ParseError("config: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  if (!explicit_input) c.preprocess.input_size = c.model.input_size;
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) { return from_json(read_text(path)); }

std::filesystem::path RunConfig::checkpoint_path() const {
  return checkpoint.empty() ? run_dir / "checkpoint" / "best.fnackpt" : checkpoint;
}

void write_stamp(const RunConfig& cfg, const std::string& command, const std::string& result_json) {
  Json s;
  s["command"] = command;
  s["code_version"] = kCodeVersion;
  s["seed"] = cfg.train.seed;
  s["serial"] = cfg.train.serial;
  s["config"] = Json::parse(cfg.to_json());
  s["result"] = Json::parse(result_json);
  const std::string text = s.dump(2) + "\n";
  write_text(cfg.run_dir / "stamps" / (command + ".json"), text);
  write_text(cfg.run_dir / "stamp.json", text);
}

DatasetManifest ingest_run(const std::filesystem::path& root, const std::filesystem::path& meta_csv,
                           int max_classes) {
  IngestOptions opt;
  opt.max_classes = max_classes;
  auto m = ingest(root, meta_csv, opt);
  m.save(root / "manifest.json");
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& data_root) {
  if (data_root.empty()) throw UsageError("no dataset root given (--data)");
  const auto path = data_root / "manifest.json";
  if (std::filesystem::exists(path)) {
    auto m = DatasetManifest::load(path);
    m.root = data_root;
    return m;
  }
  return ingest_run(data_root);
}

TrainSet load_train_set(const DatasetManifest& m, Split split, const PreprocessConfig& pc) {
  const auto clips = m.split(split);
  TrainSet t;
  t.inputs.resize(clips.size());
  parallel_items(static_cast<std::int64_t>(clips.size()), [&](std::int64_t i) {
    t.inputs[i] = to_model_input(preprocess(load_wav(m.audio_path(*clips[i])), pc), pc.input_size,
                                 pc.channels);
  });
  for (const auto* c : clips) {
    t.labels.push_back(c->label);
    t.ids.push_back(c->filename);
  }
  return t;
}

std::vector<EvalClip> load_eval_clips(const DatasetManifest& m, Split split, const PreprocessConfig& pc) {
  const auto clips = m.split(split);
  std::vector<EvalClip> out(clips.size());
  parallel_items(static_cast<std::int64_t>(clips.size()), [&](std::int64_t i) {
    out[i].id = clips[i]->filename;
    out[i].label = clips[i]->label;
    out[i].log_mag = preprocess(load_wav(m.audio_path(*clips[i])), pc).log_mag;
  });
  return out;
}

std::string train_run(const RunConfig& cfg) {
  apply_threads(cfg);
  const auto m = load_manifest(cfg.data_root);
  FocalNetConfig mc = cfg.model;
  if (mc.num_classes != m.num_classes())
    throw ConfigError("model has " + std::to_string(mc.num_classes) + " classes, dataset has " +
                      std::to_string(m.num_classes()));
  const auto train = load_train_set(m, Split::kTrain, cfg.preprocess);
  const auto val = load_train_set(m, Split::kVal, cfg.preprocess);

  FitOptions opt;
  opt.checkpoint_dir = cfg.run_dir / "checkpoint";
  opt.log_path = cfg.run_dir / "train_log.jsonl";
  opt.verbose = cfg.verbose;
  std::filesystem::create_directories(*opt.checkpoint_dir);
  const auto r = fit(mc, cfg.train, cfg.preprocess, train, val, opt);

  std::ostringstream hist;
  hist << std::setprecision(17) << "epoch,step,train_loss,val_accuracy\n";
  for (const auto& e : r.last.history)
    hist << e.epoch << ',' << e.step << ',' << e.train_loss << ',' << e.val_accuracy << '\n';
  write_text(cfg.run_dir / "train_history.csv", hist.str());

  Json out;
  out["best_epoch"] = r.best.best_epoch;
  out["best_val_accuracy"] = r.best.best_val_accuracy;
  out["epochs"] = r.last.epoch;
  out["steps"] = r.last.step;
  out["model_id"] = model_id(*r.best.model);
  out["parameters"] = r.best.model->parameter_count();
  out["checkpoint"] = (*opt.checkpoint_dir / "best.fnackpt").string();
  out["checkpoint_hash"] = file_hash(*opt.checkpoint_dir / "best.fnackpt");
  const std::string text = out.dump(2);
  write_stamp(cfg, "train", text);
  return text;
}

std::string evaluate_run(const RunConfig& cfg) {
  apply_threads(cfg);
  const auto ck = load_model_checkpoint(cfg);
  const auto m = load_manifest(cfg.data_root);
  const Split split = parse_split(cfg.split);
  const auto clips = load_eval_clips(m, split, ck.preprocess);
  FocalNetClassifier cls(*ck.model, ck.preprocess.input_size, ck.preprocess.channels);
  const std::string id = model_id(*ck.model);
  const auto sweep = quantile_sweep(cls, clips, {cfg.q}, id, cfg.split);
  write_text(cfg.run_dir / "metrics.csv", sweep.to_csv());
  Json out;
  out["split"] = cfg.split;
  out["q"] = cfg.q;
  out["n_clips"] = clips.size();
  out["acc"] = sweep.points[0].accuracy;
  out["fid_i"] = sweep.points[0].fid_i;
  out["fa"] = sweep.points[0].fa;
  out["model_id"] = id;
  out["metrics_hash"] = file_hash(cfg.run_dir / "metrics.csv");
  const std::string text = out.dump(2);
  write_text(cfg.run_dir / "eval.json", text + "\n");
  write_stamp(cfg, "eval", text);
  return text;
}

std::string sweep_run(const RunConfig& cfg) {
  apply_threads(cfg);
  const auto q = parse_q_grid(cfg.q_grid);
  const auto ck = load_model_checkpoint(cfg);
  const auto m = load_manifest(cfg.data_root);
  const auto clips = load_eval_clips(m, parse_split(cfg.split), ck.preprocess);
  FocalNetClassifier cls(*ck.model, ck.preprocess.input_size, ck.preprocess.channels);
  const std::string id = model_id(*ck.model);
  const auto sweep = quantile_sweep(cls, clips, q, id, cfg.split);
  write_text(cfg.run_dir / "metrics.csv", sweep.to_csv());

  Json plot;
  plot["split"] = cfg.split;
  plot["model_id"] = id;
  plot["n_clips"] = clips.size();
  Json qs = Json::array(), fid = Json::array(), fa = Json::array();
  for (const auto& p : sweep.points) {
    qs.push_back(p.q);
    fid.push_back(p.fid_i);
    fa.push_back(p.fa);
  }
  plot["q"] = qs;
  plot["fid_i"] = fid;
  plot["fa"] = fa;
  const double rho = sweep.spearman_q_fa();
  plot["spearman_q_fa"] = std::isnan(rho) ? Json(nullptr) : Json(rho);
  plot["accuracy"] = sweep.points[0].accuracy;
  write_text(cfg.run_dir / "sweep.json", plot.dump(2) + "\n");

  Json out;
  out["rows"] = sweep.points.size();
  out["metrics_csv"] = (cfg.run_dir / "metrics.csv").string();
  out["metrics_hash"] = file_hash(cfg.run_dir / "metrics.csv");
  out["spearman_q_fa"] = plot["spearman_q_fa"];
  out["model_id"] = id;
  const std::string text = out.dump(2);
  write_stamp(cfg, "sweep", text);
  return text;
}

std::string interpret_run(const RunConfig& cfg) {
  apply_threads(cfg);
  if (cfg.clip.empty()) throw UsageError("interpret: no clip given (--clip)");
  const auto ck = load_model_checkpoint(cfg);
  const auto wav = load_wav(cfg.clip);
  const auto li = listenable_interpretation(wav, *ck.model, cfg.q, ck.preprocess);
  const auto dir = cfg.run_dir / "interpretations";
  std::filesystem::create_directories(dir);
  const std::string stem = cfg.clip.stem().string() + "_q" + fixed_q(cfg.q);
  const auto mask_path = dir / (stem + "_mask.pgm");
  const auto wav_path = dir / (stem + "_interpretation.wav");
  const auto spec_path = dir / (stem + "_interpretation.fnaspec");
  write_pgm(li.mask.mask, mask_path);
  save_wav(li.audio, wav_path, WavEncoding::kFloat32);
  write_spectrogram(li.interpretation, spec_path);

  Json meta;
  meta["clip"] = cfg.clip.string();
  meta["q"] = cfg.q;
  meta["threshold"] = li.mask.threshold;
  meta["retained_fraction"] = li.mask.retained_fraction();
  meta["predicted_class"] = li.predicted_class;
  meta["probabilities"] = li.probabilities;
  meta["model_id"] = model_id(*ck.model);
  meta["files"] = {{"mask", mask_path.filename().string()},
                   {"audio", wav_path.filename().string()},
                   {"spectrogram", spec_path.filename().string()}};
  meta["hashes"] = {{"mask", file_hash(mask_path)},
                    {"audio", file_hash(wav_path)},
                    {"spectrogram", file_hash(spec_path)}};
  const std::string text = meta.dump(2);
  write_text(dir / (stem + ".json"), text + "\n");
  write_stamp(cfg, "interpret", text);
  return text;
}

std::string gen_synth_run(const std::filesystem::path& root, const SynthConfig& sc) {
  auto m = generate_synthetic(root, sc);
  m.save(root / "manifest.json");
  Json out;
  out["root"] = m.root.string();
  out["clips"] = m.clips.size();
  out["classes"] = m.class_names;
  return out.dump(2);
}

}  // namespace fna
