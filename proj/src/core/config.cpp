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

#include "config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "errors.hpp"

namespace ebmflow {

namespace {

std::string quoted(std::string_view key) { return "'" + std::string(key) + "'"; }

std::size_t to_size(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw ConfigError(quoted(key) + ": expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw ConfigError(quoted(key) + ": expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  const std::string s(v);
  char* end = nullptr;
  const double out = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(out)) {
    throw ConfigError(quoted(key) + ": expected a number, got '" + s + "'");
  }
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(quoted(key) + ": expected true or false, got '" + std::string(v) + "'");
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
  try {
    if (key == "data.dataset") {
      dataset = DatasetId::parse(value);
    } else if (key == "data.train_size") {
      train_size = to_size(key, value);
    } else if (key == "data.test_size") {
      test_size = to_size(key, value);
    } else if (key == "architecture.base") {
      base = parse_base_kind(value);
    } else if (key == "architecture.delta") {
      delta = to_double(key, value);
    } else if (key == "architecture.coupling") {
      coupling = parse_coupling_kind(value);
    } else if (key == "architecture.components") {
      components = to_size(key, value);
    } else if (key == "architecture.width") {
      width = to_size(key, value);
    } else if (key == "architecture.blocks") {
      blocks = to_size(key, value);
    } else if (key == "architecture.dequant") {
      dequant = parse_dequant(value);
    } else if (key == "architecture.dequant_blocks") {
      dequant_blocks = to_size(key, value);
    } else if (key == "architecture.logit_alpha") {
      logit_alpha = to_double(key, value);
    } else if (key == "architecture.sample_burn_in") {
      sample_burn_in = to_size(key, value);
    } else if (key == "training.learning_rate") {
      train.learning_rate = to_double(key, value);
    } else if (key == "training.batch_size") {
      train.batch_size = to_size(key, value);
    } else if (key == "training.epochs") {
      train.epochs = to_size(key, value);
    } else if (key == "training.seed") {
      train.seed = to_u64(key, value);
    } else if (key == "training.pcd_k") {
      train.pcd_k = to_size(key, value);
    } else if (key == "training.pcd_chains") {
      train.pcd_chains = to_size(key, value);
    } else if (key == "training.l2_coeff") {
      train.l2_coeff = to_double(key, value);
    } else if (key == "training.l2_mode") {
      if (value == "penalty") {
        train.l2_mode = L2Mode::kPenalty;
      } else if (value == "clip") {
        train.l2_mode = L2Mode::kClip;
      } else {
        throw ConfigError(quoted(key) + ": expected penalty or clip");
      }
    } else if (key == "training.clip_norm") {
      train.clip_norm = to_double(key, value);
    } else if (key == "training.dropout") {
      train.dropout = to_double(key, value);
    } else if (key == "training.negative_phase") {
      if (value == "pcd") {
        train.negative = NegativeMode::kPcd;
      } else if (value == "exact") {
        train.negative = NegativeMode::kExact;
      } else {
        throw ConfigError(quoted(key) + ": expected pcd or exact");
      }
    } else if (key == "training.logz") {
      if (value == "exact") {
        logz = LogZMode::kExact;
      } else if (value == "ais") {
        logz = LogZMode::kAis;
      } else if (value == "auto") {
        logz.reset();
      } else {
        throw ConfigError(quoted(key) + ": expected exact, ais or auto");
      }
    } else if (key == "training.ais_temps") {
      train.ais.temps = to_size(key, value);
    } else if (key == "training.ais_chains") {
      train.ais.chains = to_size(key, value);
    } else if (key == "training.eval_batch") {
      train.eval_batch = to_size(key, value);
    } else if (key == "training.output_dir") {
      output_dir = std::string(value);
    } else if (key == "training.checkpoint_every") {
      checkpoint_every = to_size(key, value);
    } else if (key == "training.record_time") {
      record_time = to_bool(key, value);
    } else {
      throw ConfigError("unknown config key " + quoted(key));
    }
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.find(quoted(key)) != std::string::npos) throw;
    throw ConfigError(quoted(key) + ": " + msg);
  }
}

void RunConfig::validate() const {
  if (!dataset) throw ConfigError("missing required field 'data.dataset'");
  if (!base) throw ConfigError("missing required field 'architecture.base'");
  if (train_size == 0) throw ConfigError("'data.train_size' must be at least 1");
  if (test_size == 0) throw ConfigError("'data.test_size' must be at least 1");
  if (delta && !(*delta > 0.0)) throw ConfigError("'architecture.delta' must be positive");
  if (coupling == CouplingKind::kMixLogCdf && components == 0) {
    throw ConfigError("'architecture.components' must be at least 1");
  }
  if (width == 0) throw ConfigError("'architecture.width' must be at least 1");
  if (!(logit_alpha > 0.0 && logit_alpha < 0.5)) {
    throw ConfigError("'architecture.logit_alpha' must lie in (0, 0.5)");
  }
  if (dequant && *dequant != Dequant::kNone && !dataset->image()) {
    throw ConfigError("'architecture.dequant' applies to image data only");
  }
  if (dataset->image() && dequant && *dequant == Dequant::kNone) {
    throw ConfigError("image data needs uniform or variational dequantization");
  }
  if (output_dir.empty()) throw ConfigError("'training.output_dir' must not be empty");
  train.validate();
}

std::string RunConfig::to_ini() const {
  std::ostringstream os;
  os << "[data]\n";
  if (dataset) os << "dataset = " << dataset->str() << "\n";
  os << "train_size = " << train_size << "\n"
     << "test_size = " << test_size << "\n\n[architecture]\n";
  if (base) os << "base = " << to_string(*base) << "\n";
  if (delta) os << "delta = " << fmt(*delta) << "\n";
  os << "coupling = " << to_string(coupling) << "\n"
     << "components = " << components << "\n"
     << "width = " << width << "\n"
     << "blocks = " << blocks << "\n";
  if (dequant) os << "dequant = " << to_string(*dequant) << "\n";
  os << "dequant_blocks = " << dequant_blocks << "\n"
     << "logit_alpha = " << fmt(logit_alpha) << "\n"
     << "sample_burn_in = " << sample_burn_in << "\n\n[training]\n"
     << "learning_rate = " << fmt(train.learning_rate) << "\n"
     << "batch_size = " << train.batch_size << "\n"
     << "epochs = " << train.epochs << "\n"
     << "seed = " << train.seed << "\n"
     << "pcd_k = " << train.pcd_k << "\n"
     << "pcd_chains = " << train.pcd_chains << "\n"
     << "l2_coeff = " << fmt(train.l2_coeff) << "\n"
     << "l2_mode = " << (train.l2_mode == L2Mode::kPenalty ? "penalty" : "clip") << "\n"
     << "clip_norm = " << fmt(train.clip_norm) << "\n"
     << "dropout = " << fmt(train.dropout) << "\n"
     << "negative_phase = " << (train.negative == NegativeMode::kPcd ? "pcd" : "exact") << "\n"
     << "logz = " << (!logz ? "auto" : *logz == LogZMode::kExact ? "exact" : "ais") << "\n"
     << "ais_temps = " << train.ais.temps << "\n"
     << "ais_chains = " << train.ais.chains << "\n"
     << "eval_batch = " << train.eval_batch << "\n"
     << "output_dir = " << output_dir << "\n"
     << "checkpoint_every = " << checkpoint_every << "\n"
     << "record_time = " << (record_time ? "true" : "false") << "\n";
  return os.str();
}

ModelSpec RunConfig::model_spec(const EventShape& shape, bool image) const {
  if (!base) throw ConfigError("missing required field 'architecture.base'");
  ModelSpec s;
  s.flow.image = image;
  s.flow.shape = shape;
  s.flow.coupling = coupling;
  s.flow.components = components;
  s.flow.width = width;
  s.flow.toy_blocks = blocks;
  s.flow.logit_alpha = logit_alpha;
  s.base = *base;
  s.delta = delta ? *delta : default_delta(*base);
  s.dequant = dequant ? *dequant : (image ? Dequant::kUniform : Dequant::kNone);
  s.dequant_blocks = dequant_blocks;
  s.sample_burn_in = sample_burn_in;
  return s;
}

LogZMode RunConfig::metrics_logz(std::size_t spins) const {
  if (logz) return *logz;
  return spins <= kMaxMomentSpins ? LogZMode::kExact : LogZMode::kAis;
}

RunConfig parse_run_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    if (section != "data" && section != "architecture" && section != "training") {
      if (body.empty()) throw ConfigError("config key '" + section + "' outside a section");
      throw ConfigError("unknown config section '" + section + "'");
    }
    for (const auto& [key, value] : body) {
      cfg.set(section + "." + key, value.get_value<std::string>());
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return parse_run_config(os.str());
}

}  // namespace ebmflow
