// Copyright 2026 The ebmflow Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "checkpoint.hpp"

#include <cstring>
#include <json.hpp>

#include "errors.hpp"
#include "tensor_io.hpp"

namespace ebmflow {

namespace {

using json = nlohmann::json;

constexpr unsigned char kMagic[8] = {'E', 'B', 'M', 'F', 'C', 'K', 'P', 'T'};

json spec_json(const ModelSpec& s, std::uint64_t seed) {
  return json{{"image", s.flow.image},
              {"height", s.flow.shape.height},
              {"width", s.flow.shape.width},
              {"channels", s.flow.shape.channels},
              {"coupling", std::string(to_string(s.flow.coupling))},
              {"components", s.flow.components},
              {"hidden_width", s.flow.width},
              {"blocks", s.flow.toy_blocks},
              {"logit_alpha", s.flow.logit_alpha},
              {"base", std::string(to_string(s.base))},
              {"delta", s.delta},
              {"dequant", std::string(to_string(s.dequant))},
              {"dequant_blocks", s.dequant_blocks},
              {"sample_burn_in", s.sample_burn_in},
              {"seed", seed}};
}

ModelSpec spec_from_json(const json& j) {
  ModelSpec s;
  s.flow.image = j.at("image").get<bool>();
  s.flow.shape = {j.at("height").get<std::size_t>(), j.at("width").get<std::size_t>(),
                  j.at("channels").get<std::size_t>()};
  s.flow.coupling = parse_coupling_kind(j.at("coupling").get<std::string>());
  s.flow.components = j.at("components").get<std::size_t>();
  s.flow.width = j.at("hidden_width").get<std::size_t>();
  s.flow.toy_blocks = j.at("blocks").get<std::size_t>();
  s.flow.logit_alpha = j.at("logit_alpha").get<double>();
  s.base = parse_base_kind(j.at("base").get<std::string>());
  s.delta = j.at("delta").get<double>();
  s.dequant = parse_dequant(j.at("dequant").get<std::string>());
  s.dequant_blocks = j.at("dequant_blocks").get<std::size_t>();
  s.sample_burn_in = j.at("sample_burn_in").get<std::size_t>();
  return s;
}

struct Reader {
  std::span<const unsigned char> bytes;
  std::size_t pos = 0;

  const unsigned char* take(std::size_t n) {
    if (bytes.size() - pos < n) throw FormatError("checkpoint: truncated");
    const unsigned char* p = bytes.data() + pos;
    pos += n;
    return p;
  }
  void fill(Tensor& t) {
    const unsigned char* p = take(8 * t.size());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = get_f64(p + 8 * i);
  }
};

void put_tensor(std::vector<unsigned char>& out, const Tensor& t) {
  for (double v : t.values()) put_f64(out, v);
}

}  // namespace

std::string architecture_echo(const ModelSpec& spec, std::uint64_t model_seed) {
  return spec_json(spec, model_seed).dump();
}

std::vector<unsigned char> encode_checkpoint(EbmFlowModel& model, std::uint64_t model_seed,
                                             const std::string& dataset, std::size_t epoch,
                                             Trainer* trainer) {
  const std::vector<Parameter*> params = model.parameters();
  json header;
  header["format"] = "ebmflow-checkpoint";
  header["architecture"] = spec_json(model.spec(), model_seed);
  header["dataset"] = dataset;
  header["epoch"] = epoch;
  json plist = json::array();
  for (const Parameter* p : params) plist.push_back({{"name", p->name}, {"shape", p->value.shape()}});
  header["parameters"] = plist;
  header["trainer"] = trainer != nullptr;
  if (trainer) {
    header["pd_failures"] = trainer->pd_failures();
    header["rng"] = {{"key", trainer->rng().key()}, {"counter", trainer->rng().counter()}};
    header["adam_t"] = trainer->adam().t;
    header["pcd_chains"] = trainer->pcd().chain_count();
    header["pcd_width"] = static_cast<std::size_t>(trainer->pcd().spins.cols());
  }
  const std::string text = header.dump();

  std::vector<unsigned char> out(kMagic, kMagic + 8);
  put_u32(out, kCheckpointVersion);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const Parameter* p : params) put_tensor(out, p->value);
  if (trainer) {
    for (const Tensor& t : trainer->adam().m) put_tensor(out, t);
    for (const Tensor& t : trainer->adam().v) put_tensor(out, t);
    const PcdState& pcd = trainer->pcd();
    for (Eigen::Index i = 0; i < pcd.spins.size(); ++i) put_f64(out, pcd.spins.data()[i]);
    for (const Rng& r : pcd.streams) {
      put_u64(out, r.key());
      put_u64(out, r.counter());
    }
  }
  put_u32(out, crc32(out));
  return out;
}

Checkpoint decode_checkpoint(std::span<const unsigned char> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw FormatError("checkpoint: bad magic");
  }
  if (bytes.size() < 24) throw FormatError("checkpoint: truncated");
  const std::uint32_t stored = get_u32(bytes.data() + bytes.size() - 4);
  if (stored != crc32(bytes.first(bytes.size() - 4))) throw FormatError("checkpoint: CRC mismatch");
  Reader rd{bytes.first(bytes.size() - 4), 8};
  const std::uint32_t version = get_u32(rd.take(4));
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint64_t hlen = get_u64(rd.take(8));
  if (hlen > bytes.size()) throw FormatError("checkpoint: truncated");
  const unsigned char* h = rd.take(hlen);
  Checkpoint ck;
  try {
    const json header = json::parse(h, h + hlen);
    if (header.at("format") != "ebmflow-checkpoint") throw FormatError("checkpoint: unknown format tag");
    const json& arch = header.at("architecture");
    ck.model_seed = arch.at("seed").get<std::uint64_t>();
    ck.architecture = arch.dump();
    ck.dataset = header.at("dataset").get<std::string>();
    ck.epoch = header.at("epoch").get<std::size_t>();
    ck.model = std::make_unique<EbmFlowModel>(spec_from_json(arch), ck.model_seed);
    const std::vector<Parameter*> params = ck.model->parameters();
    const json& plist = header.at("parameters");
    if (plist.size() != params.size()) throw FormatError("checkpoint: parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (plist[i].at("name") != params[i]->name ||
          plist[i].at("shape").get<Tensor::Shape>() != params[i]->value.shape()) {
        throw FormatError("checkpoint: parameter " + params[i]->name + " does not match the architecture");
      }
      rd.fill(params[i]->value);
      params[i]->zero_grad();
    }
    if (header.at("trainer").get<bool>()) {
      TrainerSnapshot snap;
      snap.epoch = ck.epoch;
      snap.pd_failures = header.at("pd_failures").get<std::size_t>();
      snap.rng = Rng::from_state(header.at("rng").at("key").get<std::uint64_t>(),
                                 header.at("rng").at("counter").get<std::uint64_t>());
      snap.adam.t = header.at("adam_t").get<std::uint64_t>();
      for (auto* moments : {&snap.adam.m, &snap.adam.v}) {
        for (const Parameter* p : params) {
          Tensor t(p->value.shape(), 0.0);
          rd.fill(t);
          moments->push_back(std::move(t));
        }
      }
      const auto chains = header.at("pcd_chains").get<std::size_t>();
      const auto width = header.at("pcd_width").get<std::size_t>();
      snap.pcd.spins.resize(static_cast<Eigen::Index>(chains), static_cast<Eigen::Index>(width));
      const unsigned char* sp = rd.take(8 * chains * width);
      for (std::size_t i = 0; i < chains * width; ++i) snap.pcd.spins.data()[i] = get_f64(sp + 8 * i);
      for (std::size_t c = 0; c < chains; ++c) {
        const unsigned char* p = rd.take(16);
        snap.pcd.streams.push_back(Rng::from_state(get_u64(p), get_u64(p + 8)));
      }
      ck.trainer = std::move(snap);
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed header: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: invalid architecture: ") + e.what());
  }
  if (rd.pos != rd.bytes.size()) throw FormatError("checkpoint: trailing bytes");
  return ck;
}

void save_checkpoint(const std::string& path, EbmFlowModel& model, std::uint64_t model_seed,
                     const std::string& dataset, std::size_t epoch, Trainer* trainer) {
  const std::vector<unsigned char> bytes = encode_checkpoint(model, model_seed, dataset, epoch, trainer);
  const std::string tmp = path + ".tmp";
  write_file(tmp, bytes);
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("cannot move checkpoint into '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void restore_trainer(Trainer& trainer, const TrainerSnapshot& snap) {
  if (snap.adam.m.size() != trainer.adam().m.size()) {
    throw FormatError("checkpoint: optimizer state does not match the model");
  }
  trainer.adam() = snap.adam;
  trainer.pcd() = snap.pcd;
  trainer.rng() = snap.rng;
  trainer.set_epoch(snap.epoch);
  trainer.set_pd_failures(snap.pd_failures);
}

}  // namespace ebmflow
