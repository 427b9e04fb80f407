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

#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <string>

#include "ebmflow/ebmflow.h"

namespace fs = std::filesystem;

TEST_CASE("status codes and last error") {
  ebmf_config* cfg = nullptr;
  CHECK(ebmf_config_parse("[data]\ndatasett = moons\n", &cfg) == EBMF_ERR_CONFIG);
  CHECK(std::string(ebmf_last_error()).find("data.datasett") != std::string::npos);
  CHECK(ebmf_config_parse(nullptr, &cfg) == EBMF_ERR_ARGUMENT);
  ebmf_model* m = nullptr;
  CHECK(ebmf_model_load("/nonexistent/checkpoint.ebmf", &m) == EBMF_ERR_IO);
  CHECK(m == nullptr);
  ebmf_tensor* t = nullptr;
  CHECK(ebmf_plot("/nonexistent.csv", "pie", 0, "/tmp/x.svg") != EBMF_OK);
  CHECK(ebmf_tensor_read("/nonexistent.ebmf", &t) == EBMF_ERR_IO);
}

TEST_CASE("tensor handles") {
  const uint64_t dims[2] = {2, 3};
  ebmf_tensor* t = nullptr;
  REQUIRE(ebmf_tensor_create(2, dims, &t) == EBMF_OK);
  CHECK(ebmf_tensor_rank(t) == 2);
  CHECK(ebmf_tensor_dim(t, 1) == 3);
  CHECK(ebmf_tensor_size(t) == 6);
  for (int i = 0; i < 6; ++i) ebmf_tensor_data(t)[i] = i * 0.5;
  const std::string path = (fs::temp_directory_path() / "ebmf_capi_t.ebmf").string();
  REQUIRE(ebmf_tensor_write(t, path.c_str()) == EBMF_OK);
  ebmf_tensor* back = nullptr;
  REQUIRE(ebmf_tensor_read(path.c_str(), &back) == EBMF_OK);
  CHECK(std::memcmp(ebmf_tensor_data(back), ebmf_tensor_data(t), 6 * sizeof(double)) == 0);
  ebmf_tensor_free(back);
  ebmf_tensor_free(t);
  fs::remove(path);
}

TEST_CASE("train, load, sample, evaluate") {
  const fs::path dir = fs::temp_directory_path() / "ebmf_capi_run";
  fs::remove_all(dir);
  ebmf_config* cfg = nullptr;
  REQUIRE(ebmf_config_parse("[data]\ndataset = gauss8\ntrain_size = 64\ntest_size = 32\n"
                            "[architecture]\nbase = dflow\nblocks = 1\nwidth = 8\n"
                            "[training]\nepochs = 1\nbatch_size = 32\n",
                            &cfg) == EBMF_OK);
  REQUIRE(ebmf_config_set(cfg, "training.output_dir", dir.c_str()) == EBMF_OK);
  char* ini = nullptr;
  REQUIRE(ebmf_config_to_ini(cfg, &ini) == EBMF_OK);
  CHECK(std::string(ini).find("base = dflow") != std::string::npos);
  ebmf_string_free(ini);
  ebmf_train_summary s;
  REQUIRE(ebmf_train(cfg, 0, nullptr, nullptr, &s) == EBMF_OK);
  CHECK(s.final_epoch == 1);
  CHECK(s.has_metrics == 1);
  ebmf_config_free(cfg);

  ebmf_model* m = nullptr;
  REQUIRE(ebmf_model_load((dir / "checkpoint.ebmf").c_str(), &m) == EBMF_OK);
  ebmf_model_info info;
  REQUIRE(ebmf_model_info_get(m, &info) == EBMF_OK);
  CHECK(info.dim == 2);
  CHECK(info.has_spins == 1);
  CHECK(std::string(info.base_kind) == "dflow");
  ebmf_tensor *x = nullptr, *sp = nullptr;
  REQUIRE(ebmf_model_sample(m, 7, 3, &x, &sp) == EBMF_OK);
  CHECK(ebmf_tensor_dim(x, 0) == 7);
  ebmf_tensor* distinct = nullptr;
  REQUIRE(ebmf_model_distinct_spins(m, 200, 1, &distinct) == EBMF_OK);
  CHECK(ebmf_tensor_dim(distinct, 0) >= 1);
  CHECK(ebmf_tensor_dim(distinct, 0) <= 4);
  ebmf_tensor* grid = nullptr;
  REQUIRE(ebmf_model_conditional_grid(m, distinct, 3, 1, &grid) == EBMF_OK);
  CHECK(ebmf_tensor_dim(grid, 0) == 3 * ebmf_tensor_dim(distinct, 0));
  ebmf_eval_result r;
  const ebmf_logz_options opts{EBMF_LOGZ_EXACT, 0, 0, 0};
  REQUIRE(ebmf_model_eval(m, "gauss8", 50, 1, &opts, &r) == EBMF_OK);
  CHECK(r.count == 50);
  CHECK(r.logz_stderr == 0.0);
  CHECK(ebmf_model_eval(m, "moons3d", 50, 1, &opts, &r) == EBMF_ERR_CONFIG);
  ebmf_tensor* ll = nullptr;
  double lz = 0, se = 1;
  REQUIRE(ebmf_model_log_likelihood(m, x, &opts, &ll, &lz, &se) == EBMF_OK);
  CHECK(ebmf_tensor_dim(ll, 0) == 7);
  CHECK(lz == r.logz);
  for (ebmf_tensor* t : {x, sp, distinct, grid, ll}) ebmf_tensor_free(t);
  ebmf_model_free(m);
  fs::remove_all(dir);
}
