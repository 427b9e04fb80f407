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

#include "ebmflow/ebmflow.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>

#include "checkpoint.hpp"
#include "config.hpp"
#include "errors.hpp"
#include "figures.hpp"
#include "run.hpp"
#include "tensor_io.hpp"

struct ebmf_config {
  ebmflow::RunConfig cfg;
};

struct ebmf_model {
  ebmflow::Checkpoint ck;
};

struct ebmf_tensor {
  ebmflow::Tensor t;
};

namespace {

using namespace ebmflow;

thread_local std::string g_last_error;

ebmf_status fail(ebmf_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <typename F>
ebmf_status guarded(F&& body) {
  try {
    body();
    return EBMF_OK;
  } catch (const ConfigError& e) {
    return fail(EBMF_ERR_CONFIG, e.what());
  } catch (const ShapeError& e) {
    return fail(EBMF_ERR_ARGUMENT, e.what());
  } catch (const IoError& e) {
    return fail(EBMF_ERR_IO, e.what());
  } catch (const FormatError& e) {
    return fail(EBMF_ERR_FORMAT, e.what());
  } catch (const PdFailure& e) {
    return fail(EBMF_ERR_PD_FAILURE, e.what());
  } catch (const NumericError& e) {
    return fail(EBMF_ERR_NUMERIC, e.what());
  } catch (const std::exception& e) {
    return fail(EBMF_ERR_RUNTIME, e.what());
  } catch (...) {
    return fail(EBMF_ERR_RUNTIME, "unknown error");
  }
}

struct ArgumentError : ShapeError {
  using ShapeError::ShapeError;
};

template <typename T>
T& deref(T* p, const char* what) {
  if (!p) throw ArgumentError(std::string(what) + " is NULL");
  return *p;
}

std::string deref(const char* p, const char* what) {
  if (!p) throw ArgumentError(std::string(what) + " is NULL");
  return p;
}

ebmf_tensor* wrap(Tensor t) { return new ebmf_tensor{std::move(t)}; }

AisSettings ais_of(const ebmf_logz_options* o) {
  AisSettings a;
  if (o) {
    if (o->ais_temps) a.temps = o->ais_temps;
    if (o->ais_chains) a.chains = o->ais_chains;
    a.seed = o->ais_seed;
  }
  return a;
}

LogZMode mode_of(const ebmf_logz_options* o) {
  return o && o->mode == EBMF_LOGZ_AIS ? LogZMode::kAis : LogZMode::kExact;
}

Tensor quantize(Tensor x) {
  for (double& v : x.values()) v = std::clamp(std::floor(v * 256.0), 0.0, 255.0);
  return x;
}

std::string spin_label(const Tensor& spins, std::size_t row) {
  std::string s = "s=(";
  for (std::size_t j = 0; j < spins.cols(); ++j) {
    s += (j ? "," : "");
    s += spins(row, j) > 0 ? "+" : "-";
  }
  return s + ")";
}

std::string slurp(const std::string& path) {
  const std::vector<unsigned char> b = read_file(path);
  return std::string(b.begin(), b.end());
}

void write_text(const std::string& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

}  // namespace

extern "C" {

const char* ebmf_version(void) { return "0.1.0"; }

const char* ebmf_last_error(void) { return g_last_error.c_str(); }

void ebmf_string_free(char* s) { delete[] s; }

// ---- tensors ----

ebmf_status ebmf_tensor_create(size_t rank, const uint64_t* dims, ebmf_tensor** out) {
  return guarded([&] {
    deref(out, "out");
    if (rank > 16) throw ArgumentError("rank must be at most 16");
    if (rank > 0) deref(dims, "dims");
    Tensor::Shape shape(dims, dims + rank);
    *out = wrap(Tensor(std::move(shape), 0.0));
  });
}

void ebmf_tensor_free(ebmf_tensor* t) { delete t; }

size_t ebmf_tensor_rank(const ebmf_tensor* t) { return t ? t->t.rank() : 0; }

uint64_t ebmf_tensor_dim(const ebmf_tensor* t, size_t axis) {
  return t && axis < t->t.rank() ? t->t.shape()[axis] : 0;
}

size_t ebmf_tensor_size(const ebmf_tensor* t) { return t ? t->t.size() : 0; }

double* ebmf_tensor_data(ebmf_tensor* t) { return t ? t->t.data() : nullptr; }

ebmf_status ebmf_tensor_read(const char* path, ebmf_tensor** out) {
  return guarded([&] { deref(out, "out") = wrap(read_tensor(deref(path, "path"))); });
}

ebmf_status ebmf_tensor_write(const ebmf_tensor* t, const char* path) {
  return guarded([&] { write_tensor(deref(path, "path"), deref(t, "tensor").t); });
}

ebmf_status ebmf_tensor_write_csv(const ebmf_tensor* t, const char* header, const char* path) {
  return guarded([&] {
    const Tensor& x = deref(t, "tensor").t;
    if (x.rank() != 2) throw ArgumentError("CSV output needs a rank-2 tensor");
    std::vector<std::string> cols;
    if (header) {
      std::istringstream in(header);
      std::string c;
      while (std::getline(in, c, ',')) cols.push_back(c);
    } else {
      for (std::size_t j = 0; j < x.cols(); ++j) cols.push_back("x" + std::to_string(j));
    }
    write_text(deref(path, "path"), to_csv(x, cols));
  });
}

// ---- config ----

ebmf_status ebmf_config_load(const char* path, ebmf_config** out) {
  return guarded([&] { deref(out, "out") = new ebmf_config{load_run_config(deref(path, "path"))}; });
}

ebmf_status ebmf_config_parse(const char* text, ebmf_config** out) {
  return guarded([&] { deref(out, "out") = new ebmf_config{parse_run_config(deref(text, "text"))}; });
}

ebmf_status ebmf_config_set(ebmf_config* cfg, const char* key, const char* value) {
  return guarded([&] { deref(cfg, "config").cfg.set(deref(key, "key"), deref(value, "value")); });
}

ebmf_status ebmf_config_to_ini(const ebmf_config* cfg, char** out) {
  return guarded([&] {
    const std::string s = deref(cfg, "config").cfg.to_ini();
    char* buf = new char[s.size() + 1];
    std::memcpy(buf, s.c_str(), s.size() + 1);
    deref(out, "out") = buf;
  });
}

void ebmf_config_free(ebmf_config* cfg) { delete cfg; }

ebmf_status ebmf_train(const ebmf_config* cfg, int resume, ebmf_log_fn log, void* user,
                       ebmf_train_summary* out) {
  return guarded([&] {
    const RunConfig& rc = deref(cfg, "config").cfg;
    std::ostringstream lines;
    const RunSummary s = train_run(rc, resume != 0, log ? &lines : nullptr);
    if (log) {
      std::istringstream in(lines.str());
      std::string line;
      while (std::getline(in, line)) log(line.c_str(), user);
    }
    if (out) {
      *out = {};
      out->epochs_run = s.epochs_run;
      out->final_epoch = s.final_epoch;
      out->has_metrics = s.has_metrics ? 1 : 0;
      out->nll_nats = s.last.eval.nll_nats;
      out->bpd = s.last.eval.bpd;
      out->logz = s.last.eval.log_z;
      out->logz_stderr = s.last.eval.log_z_stderr;
      out->pd_failures = s.last.pd_failures;
      out->seconds = s.last.seconds;
    }
  });
}

// ---- models ----

ebmf_status ebmf_model_load(const char* checkpoint, ebmf_model** out) {
  return guarded([&] {
    deref(out, "out");
    *out = new ebmf_model{load_checkpoint(deref(checkpoint, "checkpoint"))};
  });
}

void ebmf_model_free(ebmf_model* m) { delete m; }

ebmf_status ebmf_model_info_get(const ebmf_model* m, ebmf_model_info* out) {
  return guarded([&] {
    const Checkpoint& ck = deref(m, "model").ck;
    const ModelSpec& spec = ck.model->spec();
    ebmf_model_info& info = deref(out, "out");
    info = {};
    info.dim = ck.model->dim();
    info.image = spec.flow.image ? 1 : 0;
    info.height = spec.flow.shape.height;
    info.width = spec.flow.shape.width;
    info.channels = spec.flow.shape.channels;
    info.epoch = ck.epoch;
    info.has_spins = spec.base == BaseKind::kRbm || spec.base == BaseKind::kDFlow;
    const std::string_view kind = to_string(spec.base);
    std::memcpy(info.base_kind, kind.data(), std::min(kind.size(), sizeof info.base_kind - 1));
    info.delta = spec.delta;
  });
}

ebmf_status ebmf_model_sample(ebmf_model* m, size_t count, uint64_t seed, ebmf_tensor** x,
                              ebmf_tensor** s) {
  return guarded([&] {
    EbmFlowModel& model = *deref(m, "model").ck.model;
    ModelSamples smp = model.sample(count, seed);
    if (model.spec().flow.image) smp.x = quantize(std::move(smp.x));
    if (x) *x = wrap(std::move(smp.x));
    if (s) *s = wrap(std::move(smp.s));
  });
}

ebmf_status ebmf_model_distinct_spins(ebmf_model* m, size_t count, uint64_t seed, ebmf_tensor** out) {
  return guarded([&] {
    EbmFlowModel& model = *deref(m, "model").ck.model;
    deref(out, "out");
    const SmoothedBase base = model.build_base();
    if (!base.has_spins()) throw ConfigError("model base has no spins");
    std::vector<std::vector<double>> seen;
    if (count > 0) {
      const SmoothedBase::Draw d = base.sample_z(count, seed, model.spec().sample_burn_in);
      for (Eigen::Index r = 0; r < d.s.rows(); ++r) {
        std::vector<double> row(d.s.row(r).data(), d.s.row(r).data() + d.s.cols());
        if (std::find(seen.begin(), seen.end(), row) == seen.end()) seen.push_back(std::move(row));
      }
    }
    Tensor t = Tensor::matrix(seen.size(), model.dim());
    for (std::size_t i = 0; i < seen.size(); ++i) std::copy(seen[i].begin(), seen[i].end(), t.row_span(i).begin());
    *out = wrap(std::move(t));
  });
}

ebmf_status ebmf_model_conditional_grid(ebmf_model* m, const ebmf_tensor* spins, size_t per_column,
                                        uint64_t seed, ebmf_tensor** out) {
  return guarded([&] {
    EbmFlowModel& model = *deref(m, "model").ck.model;
    deref(out, "out");
    Tensor g = model.conditional_grid(deref(spins, "spins").t, per_column, seed);
    if (model.spec().flow.image) g = quantize(std::move(g));
    *out = wrap(std::move(g));
  });
}

ebmf_status ebmf_model_eval(ebmf_model* m, const char* dataset, size_t count, uint64_t seed,
                            const ebmf_logz_options* opts, ebmf_eval_result* out) {
  return guarded([&] {
    EbmFlowModel& model = *deref(m, "model").ck.model;
    const DatasetId id = DatasetId::parse(deref(dataset, "dataset"));
    std::size_t n = count;
    if (n == 0) n = id.image() ? static_cast<std::size_t>(read_tensor(id.path).shape().at(0)) : 1000;
    const Dataset data = make_dataset(id, n, seed);
    const EvalMetrics e = eval_model(model, data, mode_of(opts), ais_of(opts));
    deref(out, "out") = {e.nll_nats, e.bpd, e.log_z, e.log_z_stderr, e.count};
  });
}

ebmf_status ebmf_model_log_likelihood(ebmf_model* m, const ebmf_tensor* x, const ebmf_logz_options* opts,
                                      ebmf_tensor** out, double* logz, double* logz_stderr) {
  return guarded([&] {
    EbmFlowModel& model = *deref(m, "model").ck.model;
    const Tensor& in = deref(x, "x").t;
    if (in.rank() != 2 || in.cols() != model.dim()) {
      throw ArgumentError("inputs must be N x " + std::to_string(model.dim()));
    }
    deref(out, "out");
    const SmoothedBase base = model.build_base();
    const LogZEstimate lz = model.log_z(base, mode_of(opts), ais_of(opts));
    const Eigen::VectorXd ll = model.log_likelihood(in, base, lz.log_z);
    *out = wrap(Tensor({in.rows(), 1}, std::vector<double>(ll.data(), ll.data() + ll.size())));
    if (logz) *logz = lz.log_z;
    if (logz_stderr) *logz_stderr = lz.std_error;
  });
}

// ---- figures ----

ebmf_status ebmf_plot(const char* input, const char* kind, size_t per_column, const char* out) {
  return guarded([&] {
    const std::string in = deref(input, "input"), k = deref(kind, "kind"), path = deref(out, "out");
    const std::string title = std::filesystem::path(in).filename().string();
    if (k == "curve") {
      const CsvTable t = parse_csv(slurp(in));
      if (t.header.size() < 2) throw ConfigError("curve plot needs at least 2 columns");
      std::vector<Series> series;
      for (std::size_t c = 1; c < t.header.size(); ++c) {
        if (t.header[0] == "epoch" && t.header[c] != "nll_nats" && t.header[c] != "bpd") continue;
        series.push_back({t.header[c], t.columns[0], t.columns[c]});
      }
      write_text(path, svg_curves(title, series));
    } else if (k == "scatter") {
      Tensor pts;
      if (in.size() >= 4 && in.substr(in.size() - 4) == ".csv") {
        const CsvTable t = parse_csv(slurp(in));
        if (t.header.size() != 2) throw ConfigError("scatter CSV must have exactly 2 columns");
        pts = Tensor::matrix(t.rows(), 2);
        for (std::size_t i = 0; i < t.rows(); ++i) pts(i, 0) = t.columns[0][i], pts(i, 1) = t.columns[1][i];
      } else {
        pts = read_tensor(in);
      }
      write_text(path, svg_scatter(title, pts));
    } else if (k == "grid") {
      const Tensor imgs = read_tensor(in);
      if (imgs.rank() != 4) throw ConfigError("grid plot needs an N x H x W x C tensor file");
      const auto& s = imgs.shape();
      const EventShape shape{s[1], s[2], s[3]};
      std::size_t pc = per_column;
      if (pc == 0) pc = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::sqrt(double(s[0])))));
      write_file(path, ppm_grid(imgs.reshaped({s[0], shape.size()}), shape, pc));
    } else {
      throw ConfigError("unknown plot kind '" + k + "' (expected curve, scatter or grid)");
    }
  });
}

ebmf_status ebmf_write_grid_figure(const ebmf_model* m, const ebmf_tensor* grid, const ebmf_tensor* spins,
                                   size_t per_column, const char* path) {
  return guarded([&] {
    const EbmFlowModel& model = *deref(m, "model").ck.model;
    const Tensor& g = deref(grid, "grid").t;
    const Tensor& s = deref(spins, "spins").t;
    const std::string out = deref(path, "path");
    if (per_column == 0 || g.rank() != 2 || g.rows() != s.rows() * per_column) {
      throw ArgumentError("grid must hold per_column rows for every spin vector");
    }
    if (model.spec().flow.image) {
      write_file(out, ppm_grid(g, model.spec().flow.shape, per_column));
      return;
    }
    if (g.cols() != 2) throw ConfigError("grid figures for vector data need 2 dimensions");
    std::vector<Tensor> panels;
    std::vector<std::string> labels;
    for (std::size_t c = 0; c < s.rows(); ++c) {
      Tensor p = Tensor::matrix(per_column, 2);
      std::copy_n(g.data() + c * per_column * 2, per_column * 2, p.data());
      panels.push_back(std::move(p));
      labels.push_back(spin_label(s, c));
    }
    write_text(out, svg_panels("samples by spin configuration", panels, labels));
  });
}

}  // extern "C"
