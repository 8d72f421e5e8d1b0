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

#include "fna/dataset.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "fna/error.h"
#include "fna/serialize.h"

namespace fna {

Split split_of_fold(int fold) {
  if (fold >= 1 && fold <= 3) return Split::kTrain;
  if (fold == 4) return Split::kVal;
  if (fold == 5) return Split::kTest;
  throw ValidationError("fold " + std::to_string(fold) + " outside 1-5");
}

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val" || name == "validation") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw UsageError("unknown split '" + name + "' (train, val, test)");
}

std::vector<const ClipRecord*> DatasetManifest::split(Split s) const {
  std::vector<const ClipRecord*> out;
  for (const auto& c : clips)
    if (split_of_fold(c.fold) == s) out.push_back(&c);
  return out;
}

std::filesystem::path DatasetManifest::audio_path(const ClipRecord& c) const {
  return root / "audio" / c.filename;
}

std::vector<int> DatasetManifest::sample_rates() const {
  std::set<int> r;
  for (const auto& c : clips) r.insert(c.sample_rate);
  return {r.begin(), r.end()};
}

std::string DatasetManifest::to_json() const {
  Json j;
  j["root"] = root.string();
  j["class_names"] = class_names;
  j["sample_rates"] = sample_rates();
  j["splits"] = {{"train", Json::array({1, 2, 3})}, {"val", Json::array({4})}, {"test", Json::array({5})}};
  Json arr = Json::array();
  for (const auto& c : clips)
    arr.push_back({{"filename", c.filename},
                   {"label", c.label},
                   {"category", c.category},
                   {"fold", c.fold},
                   {"sample_rate", c.sample_rate},
                   {"num_samples", c.num_samples}});
  j["clips"] = arr;
  return j.dump(2) + "\n";
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
  DatasetManifest m;
  try {
    const Json j = Json::parse(text);
    m.root = j.at("root").get<std::string>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    for (const auto& c : j.at("clips")) {
      ClipRecord r;
      r.filename = c.at("filename").get<std::string>();
      r.label = c.at("label").get<int>();
      r.category = c.at("category").get<std::string>();
      r.fold = c.at("fold").get<int>();
      r.sample_rate = c.at("sample_rate").get<int>();
      r.num_samples = c.at("num_samples").get<std::size_t>();
      m.clips.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
  return m;
}

void DatasetManifest::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << to_json();
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return from_json(ss.str());
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

bool parse_int(const std::string& s, int& out) {
  std::size_t used = 0;
  try {
    out = std::stoi(s, &used);
  } catch (const std::exception&) {
    return false;
  }
  return used == s.size();
}

}  // namespace

DatasetManifest ingest(const std::filesystem::path& root, const std::filesystem::path& meta_csv,
                       const IngestOptions& options) {
  const auto csv_path = meta_csv.empty() ? root / "meta" / "esc50.csv" : meta_csv;
  std::ifstream f(csv_path);
  if (!f) throw IoError("cannot open metadata " + csv_path.string());
  std::string line;
  if (!std::getline(f, line)) throw ParseError(csv_path.string() + ": empty metadata file");
  const auto header = split_csv_line(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* need : {"filename", "fold", "target", "category"})
    if (!col.count(need))
      throw ParseError(csv_path.string() + ": missing column '" + std::string(need) + "'");

  DatasetManifest m;
  m.root = std::filesystem::absolute(root).lexically_normal();
  std::vector<std::string> problems;
  std::set<std::string> seen;
  std::map<int, std::string> names;
  int row = 1;
  while (std::getline(f, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    const std::string where = "row " + std::to_string(row);
    if (cells.size() < header.size()) {
      problems.push_back(where + ": expected " + std::to_string(header.size()) + " columns, got " +
                         std::to_string(cells.size()));
      continue;
    }
    ClipRecord r;
    r.filename = cells[col["filename"]];
    r.category = cells[col["category"]];
    bool ok = true;
    if (!parse_int(cells[col["fold"]], r.fold) || r.fold < 1 || r.fold > 5) {
      problems.push_back(where + " (" + r.filename + "): fold '" + cells[col["fold"]] + "' outside 1-5");
      ok = false;
    }
    if (!parse_int(cells[col["target"]], r.label) || r.label < 0 || r.label >= options.max_classes) {
      problems.push_back(where + " (" + r.filename + "): label '" + cells[col["target"]] +
                         "' outside [0, " + std::to_string(options.max_classes - 1) + "]");
      ok = false;
    }
    if (r.filename.empty()) {
      problems.push_back(where + ": empty filename");
      continue;
    }
    if (!seen.insert(r.filename).second) {
      problems.push_back(where + ": duplicate filename " + r.filename);
      ok = false;
    }
    const auto path = m.root / "audio" / r.filename;
    if (!std::filesystem::exists(path)) {
      problems.push_back(where + ": missing file " + path.string());
      ok = false;
    } else if (options.probe_audio && ok) {
      try {
        const auto w = load_wav(path);
        r.sample_rate = w.sample_rate;
        r.num_samples = w.samples.size();
      } catch (const Error& e) {
        problems.push_back(where + ": " + e.what());
        ok = false;
      }
    }
    if (!ok) continue;
    auto [it, inserted] = names.emplace(r.label, r.category);
    if (!inserted && it->second != r.category)
      problems.push_back(where + ": label " + std::to_string(r.label) + " has categories '" +
                         it->second + "' and '" + r.category + "'");
    m.clips.push_back(std::move(r));
  }
  if (!problems.empty()) {
    std::string msg = csv_path.string() + ": " + std::to_string(problems.size()) + " invalid row(s)";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ValidationError(msg);
  }
  if (m.clips.empty()) throw ValidationError(csv_path.string() + ": no clips");
  const int k = names.rbegin()->first + 1;
  m.class_names.resize(static_cast<std::size_t>(k));
  for (const auto& [label, name] : names) m.class_names[static_cast<std::size_t>(label)] = name;
  return m;
}

const char* synth_class_name(SynthClass c) {
  switch (c) {
    case SynthClass::kTone500: return "tone_500hz";
    case SynthClass::kTone2000: return "tone_2khz";
    case SynthClass::kWhiteNoise: return "white_noise";
    case SynthClass::kAmTone1000: return "am_tone_1khz";
  }
  return "?";
}

double synth_tone_hz(SynthClass c) {
  switch (c) {
    case SynthClass::kTone500: return 500.0;
    case SynthClass::kTone2000: return 2000.0;
    case SynthClass::kWhiteNoise: return 0.0;
    case SynthClass::kAmTone1000: return 1000.0;
  }
  return 0.0;
}

Waveform synthesize_clip(SynthClass c, const SynthConfig& cfg, std::uint64_t clip_seed) {
  std::mt19937_64 rng(clip_seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double gain = 0.3 + 0.3 * u01(rng);
  const double phase = 2 * std::numbers::pi * u01(rng);
  const double am_phase = 2 * std::numbers::pi * u01(rng);
  const std::size_t n = static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.sample_rate));
  const double fs = cfg.sample_rate;
  const double f0 = synth_tone_hz(c);
  Waveform w;
  w.sample_rate = cfg.sample_rate;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    double s = 0;
    switch (c) {
      case SynthClass::kTone500:
      case SynthClass::kTone2000:
        s = std::sin(2 * std::numbers::pi * f0 * t + phase);
        break;
      case SynthClass::kWhiteNoise:
        s = 0.35 * normal(rng);
        break;
      case SynthClass::kAmTone1000:
        s = (1.0 + 0.9 * std::sin(2 * std::numbers::pi * 4.0 * t + am_phase)) / 1.9 *
            std::sin(2 * std::numbers::pi * f0 * t + phase);
        break;
    }
    const double v = gain * s + cfg.noise_floor * normal(rng);
    w.samples[i] = static_cast<float>(std::clamp(v, -1.0, 1.0));
  }
  return w;
}

DatasetManifest generate_synthetic(const std::filesystem::path& root, const SynthConfig& cfg) {
  if (cfg.num_classes < 1 || cfg.num_classes > 4) throw ConfigError("synthetic dataset supports 1-4 classes");
  if (cfg.clips_per_class < 1) throw ConfigError("clips_per_class must be >= 1");
  if (!(cfg.duration_s > 0) || cfg.sample_rate < 1) throw ConfigError("bad synthetic duration or rate");
  std::filesystem::create_directories(root / "audio");
  std::filesystem::create_directories(root / "meta");
  std::ofstream csv(root / "meta" / "esc50.csv", std::ios::trunc);
  if (!csv) throw IoError("cannot write " + (root / "meta" / "esc50.csv").string());
  csv << "filename,fold,target,category,esc10,src_file,take\n";
  int serial = 0;
  for (int k = 0; k < cfg.num_classes; ++k) {
    const auto cls = static_cast<SynthClass>(k);
    for (int i = 0; i < cfg.clips_per_class; ++i, ++serial) {
      const int fold = i % 5 + 1;
      std::ostringstream name;
      name << fold << '-' << std::setw(5) << std::setfill('0') << serial << "-A-" << k << ".wav";
      const std::uint64_t clip_seed =
          cfg.seed * 0x9e3779b97f4a7c15ull + static_cast<std::uint64_t>(serial) * 0x2545f4914f6cdd1dull + 1;
      save_wav(synthesize_clip(cls, cfg, clip_seed), root / "audio" / name.str(), cfg.encoding);
      csv << name.str() << ',' << fold << ',' << k << ',' << synth_class_name(cls) << ",False,"
          << serial << ",A\n";
    }
  }
  csv.close();
  IngestOptions opt;
  opt.max_classes = cfg.num_classes;
  return ingest(root, {}, opt);
}

}  // namespace fna
