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

// ebmflow command-line tool: train | sample | eval | grid | plot.
// Exit status 0 on success, 1 for configuration or argument errors, 2 for
// everything else (I/O, corrupt files, PD failures, non-finite values).

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "ebmflow/ebmflow.h"

namespace {

struct Failure : std::runtime_error {
  ebmf_status status;
  Failure(ebmf_status s, const std::string& msg) : std::runtime_error(msg), status(s) {}
};

void check(ebmf_status s) {
  if (s != EBMF_OK) throw Failure(s, ebmf_last_error());
}

int exit_code(ebmf_status s) { return s == EBMF_ERR_CONFIG || s == EBMF_ERR_ARGUMENT ? 1 : 2; }

struct TensorDel {
  void operator()(ebmf_tensor* t) const { ebmf_tensor_free(t); }
};
struct ModelDel {
  void operator()(ebmf_model* m) const { ebmf_model_free(m); }
};
struct ConfigDel {
  void operator()(ebmf_config* c) const { ebmf_config_free(c); }
};
using TensorPtr = std::unique_ptr<ebmf_tensor, TensorDel>;
using ModelPtr = std::unique_ptr<ebmf_model, ModelDel>;
using ConfigPtr = std::unique_ptr<ebmf_config, ConfigDel>;

ModelPtr load_model(const std::string& path) {
  ebmf_model* m = nullptr;
  check(ebmf_model_load(path.c_str(), &m));
  return ModelPtr(m);
}

ebmf_model_info info_of(ebmf_model* m) {
  ebmf_model_info info;
  check(ebmf_model_info_get(m, &info));
  return info;
}

// Image samples are stored as N x H x W x C.
TensorPtr as_images(const ebmf_tensor* flat, const ebmf_model_info& info) {
  const std::uint64_t dims[4] = {ebmf_tensor_dim(flat, 0), info.height, info.width, info.channels};
  ebmf_tensor* out = nullptr;
  check(ebmf_tensor_create(4, dims, &out));
  TensorPtr t(out);
  const double* src = ebmf_tensor_data(const_cast<ebmf_tensor*>(flat));
  std::copy(src, src + ebmf_tensor_size(flat), ebmf_tensor_data(out));
  return t;
}

std::string strip_ext(const std::string& path) {
  const std::filesystem::path p(path);
  if (p.extension() == ".ebmf" || p.extension() == ".csv") return p.parent_path() / p.stem();
  return path;
}

// Distinct spin vectors from `draws` base samples, or those stored in a file.
TensorPtr grid_spins(ebmf_model* m, const std::string& spins_file, std::size_t draws, std::uint64_t seed) {
  ebmf_tensor* s = nullptr;
  if (!spins_file.empty()) {
    check(ebmf_tensor_read(spins_file.c_str(), &s));
  } else {
    check(ebmf_model_distinct_spins(m, draws, seed, &s));
  }
  return TensorPtr(s);
}

std::string write_grid(ebmf_model* m, const ebmf_tensor* spins, std::size_t per_column, std::uint64_t seed,
                       const std::string& out) {
  const ebmf_model_info info = info_of(m);
  ebmf_tensor* g = nullptr;
  check(ebmf_model_conditional_grid(m, spins, per_column, seed, &g));
  TensorPtr grid(g);
  std::string path = out;
  const std::string ext = info.image ? ".ppm" : ".svg";
  if (std::filesystem::path(path).extension() != ext) path += ext;
  check(ebmf_write_grid_figure(m, grid.get(), spins, per_column, path.c_str()));
  return path;
}

void print_line(const char* line, void*) {
  std::printf("%s\n", line);
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EBM-Flow: invertible flows over smoothed Boltzmann machine priors"};
  app.require_subcommand(1);

  // train
  std::string config_path, base_override;
  std::vector<std::string> overrides;
  bool resume = false, quiet = false;
  auto* train = app.add_subcommand("train", "train a model from an INI config");
  train->add_option("config", config_path, "config file")->required();
  train->add_option("--base", base_override, "override architecture.base")
      ->check(CLI::IsMember({"rbm", "dflow", "multicov", "gaussian"}));
  train->add_option("--set", overrides, "override a key, section.name=value");
  train->add_flag("--resume", resume, "continue from the checkpoint in the output directory");
  train->add_flag("--quiet", quiet, "suppress per-epoch lines");

  // sample
  std::string checkpoint, out;
  std::size_t count = 1000, per_column = 8, spin_draws = 1000;
  std::uint64_t seed = 0;
  bool grid_by_spin = false;
  auto* sample = app.add_subcommand("sample", "draw samples from a checkpoint");
  sample->add_option("checkpoint", checkpoint)->required();
  sample->add_option("--count", count, "number of samples");
  sample->add_option("--seed", seed);
  sample->add_option("--out", out, "output prefix (writes .ebmf and .csv)")->required();
  sample->add_flag("--grid-by-spin", grid_by_spin, "also write a per-spin grid figure");
  sample->add_option("--per-column", per_column, "samples per spin column");
  sample->add_option("--spin-draws", spin_draws, "base draws used to collect distinct spins");

  // eval
  std::string dataset, logz = "exact", csv;
  std::size_t ais_temps = 0, ais_chains = 0;
  auto* eval = app.add_subcommand("eval", "test NLL and log Z of a checkpoint");
  eval->add_option("checkpoint", checkpoint)->required();
  eval->add_option("dataset", dataset, "moons|rings|gauss8|checker|binimg:<path>")->required();
  eval->add_option("--logz", logz)->check(CLI::IsMember({"exact", "ais"}));
  std::size_t eval_count = 0;
  eval->add_option("--count", eval_count, "test examples (default: 1000 toy points or every image)");
  eval->add_option("--seed", seed);
  eval->add_option("--ais-temps", ais_temps);
  eval->add_option("--ais-chains", ais_chains);
  eval->add_option("--csv", csv, "append a result row to this CSV");

  // grid
  std::string spins_file;
  auto* grid = app.add_subcommand("grid", "conditional samples, one column per spin vector");
  grid->add_option("checkpoint", checkpoint)->required();
  grid->add_option("--spins", spins_file, "tensor file of spin rows (default: distinct base draws)");
  grid->add_option("--spin-draws", spin_draws);
  grid->add_option("--per-column", per_column);
  grid->add_option("--seed", seed);
  grid->add_option("--out", out, "figure path")->required();

  // plot
  std::string input, kind;
  std::size_t plot_columns = 0;
  auto* plot = app.add_subcommand("plot", "render a metrics CSV or sample file");
  plot->add_option("input", input)->required();
  plot->add_option("--kind", kind)->required()->check(CLI::IsMember({"curve", "scatter", "grid"}));
  plot->add_option("--out", out)->required();
  plot->add_option("--per-column", plot_columns, "grid images per column (0 = square)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*train) {
      ebmf_config* c = nullptr;
      check(ebmf_config_load(config_path.c_str(), &c));
      ConfigPtr cfg(c);
      if (!base_override.empty()) check(ebmf_config_set(cfg.get(), "architecture.base", base_override.c_str()));
      for (const std::string& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw Failure(EBMF_ERR_ARGUMENT, "--set expects key=value, got '" + kv + "'");
        check(ebmf_config_set(cfg.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
      }
      ebmf_train_summary s;
      check(ebmf_train(cfg.get(), resume ? 1 : 0, quiet ? nullptr : print_line, nullptr, &s));
      if (s.has_metrics) {
        std::printf("done: epoch=%zu nll_nats=%.6f bpd=%.6f logz=%.6f+-%.6f pd_failures=%zu\n", s.final_epoch,
                    s.nll_nats, s.bpd, s.logz, s.logz_stderr, s.pd_failures);
      } else {
        std::printf("done: epoch=%zu (no epochs run)\n", s.final_epoch);
      }
    } else if (*sample) {
      ModelPtr m = load_model(checkpoint);
      const ebmf_model_info info = info_of(m.get());
      ebmf_tensor *x = nullptr, *s = nullptr;
      check(ebmf_model_sample(m.get(), count, seed, &x, info.has_spins ? &s : nullptr));
      TensorPtr xs(x), ss(s);
      const std::string prefix = strip_ext(out);
      TensorPtr stored = info.image ? as_images(xs.get(), info) : nullptr;
      check(ebmf_tensor_write(stored ? stored.get() : xs.get(), (prefix + ".ebmf").c_str()));
      check(ebmf_tensor_write_csv(xs.get(), nullptr, (prefix + ".csv").c_str()));
      std::printf("wrote %zu samples to %s.ebmf and %s.csv\n", count, prefix.c_str(), prefix.c_str());
      if (grid_by_spin) {
        if (!info.has_spins) throw Failure(EBMF_ERR_CONFIG, "--grid-by-spin needs an rbm or dflow base");
        TensorPtr spins = grid_spins(m.get(), "", spin_draws, seed);
        const std::string fig = write_grid(m.get(), spins.get(), per_column, seed, prefix + "_grid");
        std::printf("wrote grid with %llu columns to %s\n",
                    static_cast<unsigned long long>(ebmf_tensor_dim(spins.get(), 0)), fig.c_str());
      }
    } else if (*eval) {
      ModelPtr m = load_model(checkpoint);
      const ebmf_logz_options opts{logz == "ais" ? EBMF_LOGZ_AIS : EBMF_LOGZ_EXACT, ais_temps, ais_chains, seed};
      ebmf_eval_result r;
      check(ebmf_model_eval(m.get(), dataset.c_str(), eval_count, seed, &opts, &r));
      const ebmf_model_info info = info_of(m.get());
      std::printf("nll_nats=%.6f", r.nll_nats);
      if (info.image) std::printf(" bpd=%.6f", r.bpd);
      std::printf(" logz=%.6f stderr=%.6f count=%zu\n", r.logz, r.logz_stderr, r.count);
      if (!csv.empty()) {
        const bool fresh = !std::filesystem::exists(csv);
        std::ofstream f(csv, std::ios::app);
        if (!f) throw Failure(EBMF_ERR_IO, "cannot write '" + csv + "'");
        if (fresh) f << "checkpoint,dataset,logz_mode,nll_nats,bpd,logz,logz_stderr,count\n";
        char row[256];
        std::snprintf(row, sizeof row, ",%s,%.10f,%.10f,%.10f,%.10f,%zu\n", logz.c_str(), r.nll_nats, r.bpd, r.logz,
                      r.logz_stderr, r.count);
        f << checkpoint << "," << dataset << row;
      }
    } else if (*grid) {
      ModelPtr m = load_model(checkpoint);
      TensorPtr spins = grid_spins(m.get(), spins_file, spin_draws, seed);
      const std::string fig = write_grid(m.get(), spins.get(), per_column, seed, out);
      std::printf("wrote grid with %llu columns to %s\n",
                  static_cast<unsigned long long>(ebmf_tensor_dim(spins.get(), 0)), fig.c_str());
    } else if (*plot) {
      check(ebmf_plot(input.c_str(), kind.c_str(), plot_columns, out.c_str()));
      std::printf("wrote %s\n", out.c_str());
    }
  } catch (const Failure& e) {
    std::fprintf(stderr, "ebmflow: %s\n", e.what());
    return exit_code(e.status);
  }
  return 0;
}
