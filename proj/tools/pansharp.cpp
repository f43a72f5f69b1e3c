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
#include <CLI11.hpp>
#include <functional>
#include <iostream>

#include "pansharp/commands.hpp"

namespace {

using pansharp::RunConfig;

struct FieldCopy {
  const char* flag;
  std::function<void(RunConfig&, const RunConfig&)> copy;
};

const std::vector<FieldCopy>& config_fields() {
  static const std::vector<FieldCopy> fields = {
      {"--seed", [](RunConfig& d, const RunConfig& s) { d.seed = s.seed; }},
      {"--scenes",
       [](RunConfig& d, const RunConfig& s) { d.scenes = s.scenes; }},
      {"--scene-size",
       [](RunConfig& d, const RunConfig& s) { d.scene_size = s.scene_size; }},
      {"--bands", [](RunConfig& d, const RunConfig& s) { d.bands = s.bands; }},
      {"--batch", [](RunConfig& d, const RunConfig& s) { d.batch = s.batch; }},
      {"--iterations",
       [](RunConfig& d, const RunConfig& s) { d.iterations = s.iterations; }},
      {"--lr", [](RunConfig& d, const RunConfig& s) { d.lr = s.lr; }},
      {"--mtf-gain",
       [](RunConfig& d, const RunConfig& s) { d.mtf_gain = s.mtf_gain; }},
      {"--prompt-variant",
       [](RunConfig& d, const RunConfig& s) {
         d.prompt_variant = s.prompt_variant;
       }},
      {"--projection",
       [](RunConfig& d, const RunConfig& s) { d.projection = s.projection; }},
      {"--loss-recon",
       [](RunConfig& d, const RunConfig& s) { d.loss_recon = s.loss_recon; }},
      {"--loss-qnr",
       [](RunConfig& d, const RunConfig& s) { d.loss_qnr = s.loss_qnr; }},
      {"--loss-pseudo",
       [](RunConfig& d, const RunConfig& s) { d.loss_pseudo = s.loss_pseudo; }},
      {"--loss-semantic",
       [](RunConfig& d, const RunConfig& s) {
         d.loss_semantic = s.loss_semantic;
       }},
      {"--semantic-weight",
       [](RunConfig& d, const RunConfig& s) {
         d.semantic_weight = s.semantic_weight;
       }},
      {"--out", [](RunConfig& d, const RunConfig& s) { d.out = s.out; }},
  };
  return fields;
}

// Every subcommand carries the full RunConfig surface; precedence is
// defaults < --config file < explicit flags.
struct ConfigOpts {
  RunConfig flags;
  std::string config_path;
  CLI::App* sub = nullptr;

  void attach(CLI::App* s) {
    sub = s;
    s->add_option("--config", config_path, "key=value configuration file");
    s->add_option("--seed", flags.seed, "master random seed");
    s->add_option("--scenes", flags.scenes, "number of synthetic scenes");
    s->add_option("--scene-size", flags.scene_size,
                  "HR patch edge (multiple of 4)");
    s->add_option("--bands", flags.bands, "spectral bands (4 or 8)");
    s->add_option("--batch", flags.batch, "training batch size");
    s->add_option("--iterations", flags.iterations, "training iterations");
    s->add_option("--lr", flags.lr, "Adam learning rate");
    s->add_option("--mtf-gain", flags.mtf_gain,
                  "sensor Nyquist gain in (0,1)");
    s->add_option("--prompt-variant", flags.prompt_variant,
                  "wald|khan|noise|desc1|desc2");
    s->add_option("--projection", flags.projection, "conv|pca|rgb|gbnir");
    s->add_option("--loss-recon", flags.loss_recon,
                  "spectral+spatial reconstruction group");
    s->add_option("--loss-qnr", flags.loss_qnr, "differentiable QNR group");
    s->add_option("--loss-pseudo", flags.loss_pseudo,
                  "pseudo-supervision group");
    s->add_option("--loss-semantic", flags.loss_semantic,
                  "directional semantic group");
    s->add_option("--semantic-weight", flags.semantic_weight,
                  "weight of the semantic term");
    s->add_option("--out", flags.out, "output directory");
  }

  RunConfig resolve(const char* command) const {
    RunConfig cfg = flags;
    if (!config_path.empty()) {
      cfg = RunConfig::from_file(config_path);
      for (const auto& f : config_fields())
        if (sub->count(f.flag) > 0) f.copy(cfg, flags);
    }
    if (cfg.out.empty()) cfg.out = pansharp::cli::default_out(command);
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pansharp: a desk-scale unsupervised pansharpening laboratory"};
  app.require_subcommand(1);

  ConfigOpts sim_opts, align_opts, pre_opts, train_opts, fuse_opts, eval_opts;
  std::string dataset, stage1_ckpt, pseudo_ckpt, backbone_ckpt;
  std::string lrms_path, pan_path, hr_path, fused_path, band_map, report_out;
  std::vector<std::string> run_dirs;

  CLI::App* sim = app.add_subcommand(
      "simulate", "generate scenes and Wald-protocol triplets");
  sim_opts.attach(sim);

  CLI::App* align = app.add_subcommand(
      "align", "stage I: train the vision-language alignment");
  align_opts.attach(align);
  align->add_option("--dataset", dataset, "simulate output directory")
      ->required();

  CLI::App* pre = app.add_subcommand(
      "pretrain", "train the pseudo-reference generator at reduced resolution");
  pre_opts.attach(pre);
  pre->add_option("--dataset", dataset, "simulate output directory")
      ->required();

  CLI::App* train = app.add_subcommand(
      "train", "stage II: unsupervised fusion training at full resolution");
  train_opts.attach(train);
  train->add_option("--dataset", dataset, "simulate output directory")
      ->required();
  train->add_option("--stage1", stage1_ckpt, "adapted encoder checkpoint");
  train->add_option("--pseudo", pseudo_ckpt,
                    "reduced-resolution backbone checkpoint");

  CLI::App* fuse =
      app.add_subcommand("fuse", "run the trained backbone on one pair");
  fuse_opts.attach(fuse);
  fuse->add_option("--backbone", backbone_ckpt, "backbone checkpoint")
      ->required();
  fuse->add_option("--lrms", lrms_path, "LRMS raster")->required();
  fuse->add_option("--pan", pan_path, "PAN raster")->required();
  fuse->add_option("--band-map", band_map,
                   "preview bands, e.g. 2,1,0 or gray");

  CLI::App* eval = app.add_subcommand("eval", "compute quality metrics");
  eval_opts.attach(eval);
  eval->add_option("--fused", fused_path, "fused raster")->required();
  eval->add_option("--lrms", lrms_path, "LRMS raster")->required();
  eval->add_option("--pan", pan_path, "PAN raster")->required();
  eval->add_option("--hr", hr_path, "HR reference raster (optional)");

  CLI::App* report =
      app.add_subcommand("report", "aggregate metric CSVs across runs");
  report->add_option("dirs", run_dirs, "run directories")->required();
  report->add_option("--out-file", report_out, "write CSV here (else stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : pansharp::cli::kExitConfig;
  }

  try {
    using namespace pansharp::cli;
    if (sim->parsed()) return cmd_simulate(sim_opts.resolve("simulate"));
    if (align->parsed())
      return cmd_align(align_opts.resolve("align"), dataset);
    if (pre->parsed())
      return cmd_pretrain(pre_opts.resolve("pretrain"), dataset);
    if (train->parsed())
      return cmd_train(train_opts.resolve("train"), dataset, stage1_ckpt,
                       pseudo_ckpt);
    if (fuse->parsed())
      return cmd_fuse(fuse_opts.resolve("fuse"), backbone_ckpt, lrms_path,
                      pan_path, band_map);
    if (eval->parsed())
      return cmd_eval(eval_opts.resolve("eval"), fused_path, lrms_path,
                      pan_path, hr_path);
    if (report->parsed()) return cmd_report(run_dirs, report_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return pansharp::cli::exit_code_for(e);
  }
  return 0;
}
