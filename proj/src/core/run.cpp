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

#include "run.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "checkpoint.hpp"
#include "errors.hpp"

namespace ebmflow {

namespace fs = std::filesystem;

RunData load_run_data(const RunConfig& cfg) {
  if (!cfg.dataset) throw ConfigError("missing required field 'data.dataset'");
  const std::uint64_t seed = cfg.train.seed;
  RunData d;
  if (cfg.dataset->image()) {
    const Dataset all = make_dataset(*cfg.dataset, cfg.train_size + cfg.test_size, seed);
    const std::size_t D = all.dim();
    for (auto [part, begin, n] : {std::tuple{&d.train, std::size_t{0}, cfg.train_size},
                                  std::tuple{&d.test, cfg.train_size, cfg.test_size}}) {
      part->image = true;
      part->shape = all.shape;
      part->x = Tensor::matrix(n, D);
      std::copy_n(all.x.data() + begin * D, n * D, part->x.data());
    }
    return d;
  }
  d.train = make_dataset(*cfg.dataset, cfg.train_size, seed);
  d.test = make_dataset(*cfg.dataset, cfg.test_size, Rng(seed, 0x7E57ULL).next_u64());
  return d;
}

namespace {

std::vector<std::string> kept_metric_lines(const std::string& path, std::size_t max_epoch) {
  std::vector<std::string> lines{metrics_header()};
  std::ifstream in(path);
  if (!in) return lines;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first) {
      first = false;
      if (line != metrics_header()) throw FormatError(path + ": unexpected metrics header");
      continue;
    }
    if (line.empty()) continue;
    const std::size_t epoch = std::stoul(line.substr(0, line.find(',')));
    if (epoch <= max_epoch) lines.push_back(line);
  }
  return lines;
}

}  // namespace

RunSummary train_run(const RunConfig& cfg, bool resume, std::ostream* log) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + cfg.output_dir + "': " + ec.message());

  const RunData data = load_run_data(cfg);
  const ModelSpec spec = cfg.model_spec(data.train.shape, data.train.image);
  const std::uint64_t seed = cfg.train.seed;
  const std::string dataset = cfg.dataset->str();

  RunSummary summary;
  summary.checkpoint_path = (fs::path(cfg.output_dir) / "checkpoint.ebmf").string();
  summary.metrics_path = (fs::path(cfg.output_dir) / "metrics.csv").string();

  std::unique_ptr<EbmFlowModel> model;
  std::optional<TrainerSnapshot> snap;
  if (resume) {
    Checkpoint ck = load_checkpoint(summary.checkpoint_path);
    if (ck.architecture != architecture_echo(spec, seed)) {
      throw ConfigError("checkpoint architecture " + ck.architecture + " does not match config " +
                        architecture_echo(spec, seed));
    }
    if (!ck.trainer) throw FormatError(summary.checkpoint_path + ": no optimizer state to resume from");
    model = std::move(ck.model);
    snap = std::move(ck.trainer);
  } else {
    model = std::make_unique<EbmFlowModel>(spec, seed);
  }
  Trainer trainer(*model, cfg.train);
  if (snap) restore_trainer(trainer, *snap);

  std::vector<std::string> lines = resume ? kept_metric_lines(summary.metrics_path, trainer.epoch())
                                          : std::vector<std::string>{metrics_header()};
  {
    std::ofstream out(summary.metrics_path, std::ios::trunc);
    if (!out) throw IoError("cannot write '" + summary.metrics_path + "'");
    for (const std::string& l : lines) out << l << "\n";
  }
  if (!resume) save_checkpoint(summary.checkpoint_path, *model, seed, dataset, 0, &trainer);

  const LogZMode logz = cfg.metrics_logz(model->dim());
  const Rng ais_root(seed, 0xA15EULL);
  while (trainer.epoch() < cfg.train.epochs) {
    const auto t0 = std::chrono::steady_clock::now();
    trainer.run_epoch(data.train);
    EpochMetrics m;
    m.epoch = trainer.epoch();
    AisSettings ais = cfg.train.ais;
    ais.seed = ais_root.split(m.epoch).next_u64();
    m.eval = eval_model(*model, data.test, logz, ais, cfg.train.eval_batch);
    m.pd_failures = trainer.pd_failures();
    if (cfg.record_time) {
      m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    {
      std::ofstream out(summary.metrics_path, std::ios::app);
      out << metrics_row(m) << "\n";
      if (!out) throw IoError("cannot append to '" + summary.metrics_path + "'");
    }
    const bool last = trainer.epoch() == cfg.train.epochs;
    if (last || (cfg.checkpoint_every > 0 && m.epoch % cfg.checkpoint_every == 0)) {
      save_checkpoint(summary.checkpoint_path, *model, seed, dataset, m.epoch, &trainer);
    }
    if (log) {
      *log << "epoch " << m.epoch << " nll_nats " << m.eval.nll_nats << " bpd " << m.eval.bpd
           << " logz " << m.eval.log_z << " +- " << m.eval.log_z_stderr << " pd_failures "
           << m.pd_failures << "\n";
    }
    summary.last = m;
    summary.has_metrics = true;
    ++summary.epochs_run;
  }
  summary.final_epoch = trainer.epoch();
  return summary;
}

}  // namespace ebmflow
