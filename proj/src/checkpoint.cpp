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

#include "fna/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "fna/error.h"
#include "fna/serialize.h"

namespace fna {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

namespace {

constexpr char kMagic[8] = {'F', 'N', 'A', 'C', 'K', 'P', 'T', '\0'};

template <class V>
void put(std::vector<std::uint8_t>& out, V v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(V));
}

template <class V>
V get(std::span<const std::uint8_t> in, std::size_t offset) {
  V v;
  std::memcpy(&v, in.data() + offset, sizeof(V));
  return v;
}

void put_floats(std::vector<std::uint8_t>& out, std::span<const float> v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(v.data());
  out.insert(out.end(), p, p + v.size_bytes());
}

}  // namespace

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t h) {
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

std::string model_id(const FocalNet<float>& model) {
  std::uint64_t h = 14695981039346656037ull;
  const std::string cfg = to_json(model.config()).dump();
  h = fnv1a64({reinterpret_cast<const std::uint8_t*>(cfg.data()), cfg.size()}, h);
  model.visit_parameters(FocalNet<float>::ConstParamVisitor(
      [&](const std::string& path, const Tensor<float>& t) {
        h = fnv1a64({reinterpret_cast<const std::uint8_t*>(path.data()), path.size()}, h);
        auto d = t.data();
        h = fnv1a64({reinterpret_cast<const std::uint8_t*>(d.data()), d.size_bytes()}, h);
      }));
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  if (!c.model) throw UsageError("encode_checkpoint: checkpoint has no model");
  const FocalNet<float>& model = *c.model;

  Json header;
  header["format"] = "fna-checkpoint";
  header["model"] = to_json(c.model_config);
  header["train"] = to_json(c.train_config);
  header["preprocess"] = to_json(c.preprocess);
  header["epoch"] = c.epoch;
  header["step"] = c.step;
  header["best_epoch"] = c.best_epoch;
  header["best_val_accuracy"] = c.best_val_accuracy;
  Json hist = Json::array();
  for (const auto& e : c.history)
    hist.push_back({{"epoch", e.epoch},
                    {"step", e.step},
                    {"train_loss", e.train_loss},
                    {"val_accuracy", e.val_accuracy}});
  header["history"] = hist;

  std::vector<std::span<const float>> values;
  Json table = Json::array();
  std::size_t offset = 0;
  model.visit_parameters(FocalNet<float>::ConstParamVisitor(
      [&](const std::string& path, const Tensor<float>& t) {
        table.push_back({{"path", path}, {"shape", t.shape()}, {"offset", offset}});
        offset += t.numel();
        values.push_back(t.data());
      }));
  header["tensors"] = table;
  header["parameter_floats"] = offset;

  const bool has_adam = !c.adam.m.empty();
  if (has_adam && (c.adam.m.size() != values.size() || c.adam.v.size() != values.size()))
    throw UsageError("encode_checkpoint: optimizer state does not match the model");
  header["adam"] = {{"present", has_adam},
                    {"step", c.adam.step},
                    {"beta1", c.train_config.adam_beta1},
                    {"beta2", c.train_config.adam_beta2},
                    {"eps", c.train_config.adam_eps}};

  const std::string text = header.dump();
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 8);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (auto v : values) put_floats(out, v);
  if (has_adam) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (c.adam.m[i].size() != values[i].size())
        throw UsageError("encode_checkpoint: optimizer moment size mismatch");
      put_floats(out, c.adam.m[i]);
    }
    for (const auto& v : c.adam.v) put_floats(out, v);
  }
  put<std::uint64_t>(out, fnv1a64(out));
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kFixed = 8 + 4 + 8;
  if (bytes.size() < kFixed + 8) throw ParseError("checkpoint: truncated file");
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) throw ParseError("checkpoint: bad magic");
  const auto version = get<std::uint32_t>(bytes, 8);
  if (version != kCheckpointVersion)
    throw VersionError("checkpoint: version " + std::to_string(version) + ", expected " +
                       std::to_string(kCheckpointVersion));
  const std::size_t body = bytes.size() - 8;
  const auto stored = get<std::uint64_t>(bytes, body);
  if (fnv1a64(bytes.first(body)) != stored) throw ChecksumError("checkpoint: checksum mismatch");

  const auto header_len = get<std::uint64_t>(bytes, 12);
  if (header_len > body - kFixed) throw ParseError("checkpoint: header length exceeds file");
  Json header;
  try {
    header = Json::parse(bytes.begin() + kFixed, bytes.begin() + kFixed + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }

  Checkpoint c;
  try {
    merge_json(c.model_config, header.at("model"));
    merge_json(c.train_config, header.at("train"));
    merge_json(c.preprocess, header.at("preprocess"));
    c.epoch = header.at("epoch").get<int>();
    c.step = header.at("step").get<std::int64_t>();
    c.best_epoch = header.at("best_epoch").get<int>();
    c.best_val_accuracy = header.at("best_val_accuracy").get<double>();
    for (const auto& e : header.at("history"))
      c.history.push_back({e.at("epoch").get<int>(), e.at("step").get<std::int64_t>(),
                           e.at("train_loss").get<double>(), e.at("val_accuracy").get<double>()});
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }
  c.model_config.validate();

  const auto& table = header.at("tensors");
  const std::size_t n_floats = header.at("parameter_floats").get<std::size_t>();
  const bool has_adam = header.at("adam").at("present").get<bool>();
  const std::size_t payload = body - kFixed - header_len;
  if (payload != n_floats * 4 * (has_adam ? 3 : 1))
    throw ParseError("checkpoint: payload size does not match tensor table");
  const std::uint8_t* base = bytes.data() + kFixed + header_len;
  auto floats_at = [&](std::size_t block, std::size_t offset, std::size_t count) {
    std::vector<float> v(count);
    std::memcpy(v.data(), base + (block * n_floats + offset) * 4, count * 4);
    return v;
  };

  FocalNet<float> model(c.model_config, 0);
  std::size_t i = 0;
  model.visit_parameters(FocalNet<float>::ParamVisitor([&](const std::string& path,
                                                           Tensor<float>& t) {
    if (i >= table.size()) throw ParseError("checkpoint: missing tensor " + path);
    const auto& entry = table[i++];
    if (entry.at("path").get<std::string>() != path)
      throw ParseError("checkpoint: expected tensor " + path + ", found " +
                       entry.at("path").get<std::string>());
    if (entry.at("shape").get<Shape>() != t.shape())
      throw ParseError("checkpoint: shape mismatch for " + path);
    const auto offset = entry.at("offset").get<std::size_t>();
    if (offset + t.numel() > n_floats) throw ParseError("checkpoint: tensor " + path + " out of range");
    auto v = floats_at(0, offset, t.numel());
    std::copy(v.begin(), v.end(), t.mutable_data().begin());
    if (has_adam) {
      c.adam.m.push_back(floats_at(1, offset, t.numel()));
      c.adam.v.push_back(floats_at(2, offset, t.numel()));
    }
  }));
  if (i != table.size()) throw ParseError("checkpoint: unexpected extra tensors");
  c.adam.step = header.at("adam").at("step").get<std::int64_t>();
  c.model = std::move(model);
  return c;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(c);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + tmp.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace fna
