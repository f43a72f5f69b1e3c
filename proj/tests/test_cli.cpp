/*
Copyright 2026 the pansharp authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "pansharp/commands.hpp"

using namespace pansharp;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(bool(f));
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::path("/tmp") / ("pansharp_cli_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& sub) const {
    return (path / sub).string();
  }
};

RunConfig tiny_cfg() {
  RunConfig cfg;
  cfg.scenes = 4;
  cfg.scene_size = 32;
  cfg.batch = 2;
  cfg.iterations = 4;
  cfg.seed = 11;
  return cfg;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config: serialization round trip and schema validation") {
  TempDir tmp("config");
  RunConfig cfg = tiny_cfg();
  cfg.prompt_variant = "khan";
  cfg.loss_qnr = false;
  cfg.out = "somewhere";
  {
    std::ofstream f(tmp / "c.txt");
    f << cfg.serialize();
  }
  const RunConfig back = RunConfig::from_file(tmp / "c.txt");
  CHECK(back.serialize() == cfg.serialize());
  CHECK(back.prompt_variant == "khan");
  CHECK_FALSE(back.loss_qnr);

  {
    std::ofstream f(tmp / "bad.txt");
    f << "unknown-key=3\n";
  }
  CHECK_THROWS_AS(RunConfig::from_file(tmp / "bad.txt"), ConfigError);
  {
    std::ofstream f(tmp / "bad2.txt");
    f << "bands=5\n";
  }
  CHECK_THROWS_AS(RunConfig::from_file(tmp / "bad2.txt"), ConfigError);
  {
    std::ofstream f(tmp / "bad3.txt");
    f << "lr=fast\n";
  }
  CHECK_THROWS_AS(RunConfig::from_file(tmp / "bad3.txt"), ConfigError);
}

TEST_CASE("simulate: dataset layout, reload, byte determinism") {
  TempDir tmp("simulate");
  RunConfig cfg = tiny_cfg();
  cfg.out = tmp / "a";
  REQUIRE(cli::cmd_simulate(cfg) == 0);
  CHECK(fs::exists(tmp / "a/run_config.txt"));
  CHECK(fs::exists(tmp / "a/manifest.txt"));
  CHECK(fs::exists(tmp / "a/scene_0003/pseudo.panr"));

  const Dataset ds = load_dataset(tmp / "a");
  REQUIRE(ds.scenes.size() == 4);
  CHECK(ds.triplets[0].lrms.width == 8);
  CHECK(ds.triplets[0].pan.width == 32);
  REQUIRE(ds.triplets[0].pseudo_hrms.has_value());

  cfg.out = tmp / "b";
  REQUIRE(cli::cmd_simulate(cfg) == 0);
  for (const char* rel :
       {"manifest.txt", "scene_0000/hr.panr", "scene_0000/lrms.panr",
        "scene_0002/pan.panr", "scene_0003/pseudo.panr"})
    CHECK(slurp(tmp / (std::string("a/") + rel)) ==
          slurp(tmp / (std::string("b/") + rel)));

  RunConfig bad = cfg;
  bad.bands = 5;
  CHECK_THROWS_AS(cli::cmd_simulate(bad), ConfigError);
}

TEST_CASE("pipeline commands produce logs, checkpoints, metrics") {
  TempDir tmp("pipeline");
  RunConfig cfg = tiny_cfg();
  cfg.out = tmp / "data";
  REQUIRE(cli::cmd_simulate(cfg) == 0);

  RunConfig acfg = tiny_cfg();
  acfg.out = tmp / "align";
  REQUIRE(cli::cmd_align(acfg, tmp / "data") == 0);
  CHECK(fs::exists(tmp / "align/encoder.panw"));
  {
    const std::string log = slurp(tmp / "align/align_log.csv");
    CHECK(log.rfind("iteration,L_inter,L_intra,L_fusion,L_s1\n", 0) == 0);
    int lines = 0;
    for (char c : log) lines += c == '\n';
    CHECK(lines == 1 + acfg.iterations);
  }

  RunConfig pcfg = tiny_cfg();
  pcfg.out = tmp / "pre";
  REQUIRE(cli::cmd_pretrain(pcfg, tmp / "data") == 0);
  CHECK(fs::exists(tmp / "pre/pseudo.panw"));

  RunConfig tcfg = tiny_cfg();
  tcfg.out = tmp / "train";
  REQUIRE(cli::cmd_train(tcfg, tmp / "data", tmp / "align/encoder.panw",
                         tmp / "pre/pseudo.panw") == 0);
  CHECK(fs::exists(tmp / "train/backbone.panw"));
  {
    const std::string log = slurp(tmp / "train/train_log.csv");
    CHECK(log.rfind("# losses: rec+qnr+pseudo+sem\n", 0) == 0);
    CHECK(log.find("iteration,L_spec,L_spat,L_QNR,L_pseudo,L_d,L_total\n") !=
          std::string::npos);
  }

  // dependency validation
  RunConfig need1 = tcfg;
  need1.out = tmp / "t2";
  CHECK_THROWS_AS(cli::cmd_train(need1, tmp / "data", "", ""), ConfigError);

  RunConfig fcfg = tiny_cfg();
  fcfg.out = tmp / "fuse";
  REQUIRE(cli::cmd_fuse(fcfg, tmp / "train/backbone.panw",
                        tmp / "data/scene_0000/lrms.panr",
                        tmp / "data/scene_0000/pan.panr", "") == 0);
  CHECK(fs::exists(tmp / "fuse/fused.panr"));
  CHECK(fs::exists(tmp / "fuse/fused.ppm"));
  CHECK(fs::exists(tmp / "fuse/run_config.txt"));
  {
    // identical inputs and checkpoint give identical bytes
    RunConfig f2 = fcfg;
    f2.out = tmp / "fuse2";
    REQUIRE(cli::cmd_fuse(f2, tmp / "train/backbone.panw",
                          tmp / "data/scene_0000/lrms.panr",
                          tmp / "data/scene_0000/pan.panr", "") == 0);
    CHECK(slurp(tmp / "fuse/fused.panr") == slurp(tmp / "fuse2/fused.panr"));
    CHECK(slurp(tmp / "fuse/fused.ppm") == slurp(tmp / "fuse2/fused.ppm"));
  }

  RunConfig ecfg = tiny_cfg();
  ecfg.out = tmp / "eval";
  REQUIRE(cli::cmd_eval(ecfg, tmp / "fuse/fused.panr",
                        tmp / "data/scene_0000/lrms.panr",
                        tmp / "data/scene_0000/pan.panr",
                        tmp / "data/scene_0000/hr.panr") == 0);
  {
    const std::string m = slurp(tmp / "eval/metrics.csv");
    CHECK(m.rfind("mpsnr,ergas,sam,q2n,d_lambda,d_s,qnr\n", 0) == 0);
    // with a reference every column is populated
    CHECK(m.find(",,") == std::string::npos);
  }
  RunConfig e2 = ecfg;
  e2.out = tmp / "eval_nr";
  REQUIRE(cli::cmd_eval(e2, tmp / "fuse/fused.panr",
                        tmp / "data/scene_0000/lrms.panr",
                        tmp / "data/scene_0000/pan.panr", "") == 0);
  {
    const std::string m = slurp(tmp / "eval_nr/metrics.csv");
    CHECK(m.find("\n,,,,") != std::string::npos);  // reduced columns empty
  }

  // report aggregates both runs, sorted by run name
  REQUIRE(cli::cmd_report({tmp / "eval_nr", tmp / "eval"},
                          tmp / "report.csv") == 0);
  {
    const std::string rep = slurp(tmp / "report.csv");
    CHECK(rep.rfind("run,losses,prompt-variant,projection,seed,", 0) == 0);
    const size_t r1 = rep.find("\neval,");
    const size_t r2 = rep.find("\neval_nr,");
    REQUIRE(r1 != std::string::npos);
    REQUIRE(r2 != std::string::npos);
    CHECK(r1 < r2);
    CHECK(rep.find("incomplete") == std::string::npos);
  }
  // a run without metrics is flagged and the exit code is nonzero
  fs::create_directories(tmp / "empty_run");
  CHECK(cli::cmd_report({tmp / "eval", tmp / "empty_run"}, tmp / "r2.csv") ==
        cli::kExitData);
  CHECK(slurp(tmp / "r2.csv").find("incomplete") != std::string::npos);
}

TEST_CASE("exit code mapping") {
  CHECK(cli::exit_code_for(ConfigError("x")) == cli::kExitConfig);
  CHECK(cli::exit_code_for(DataError("x")) == cli::kExitData);
  CHECK(cli::exit_code_for(NumericError("x")) == cli::kExitNumeric);
  CHECK(cli::exit_code_for(std::runtime_error("x")) == 1);
}

}  // TEST_SUITE
