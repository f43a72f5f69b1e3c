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
#include "pansharp/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "pansharp/metrics.hpp"

namespace pansharp::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.8e", v);
  return buf;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write '" + path + "'");
  f << content;
}

void prepare_run_dir(const std::string& dir, const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory '" + dir + "'");
  write_file(dir + "/run_config.txt", cfg.serialize());
}

// Dataset geometry wins over config fields that must match the data.
void adopt_dataset(RunConfig& cfg, const Dataset& ds) {
  cfg.bands = ds.bands;
  cfg.scene_size = ds.scene_size;
  cfg.mtf_gain = double(ds.model.mtf_gains[0]);
}

}  // namespace

std::string default_out(const std::string& command) {
  const char* root = std::getenv("PANSHARP_OUT");
  return (root && *root ? std::string(root) : std::string("runs")) + "/" +
         command;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const DataError*>(&e)) return kExitData;
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  return 1;
}

std::string align_log_csv(const std::vector<Stage1LogRow>& rows) {
  std::string s = "iteration,L_inter,L_intra,L_fusion,L_s1\n";
  for (const auto& r : rows)
    s += std::to_string(r.iter) + "," + fmt(r.inter) + "," + fmt(r.intra) +
         "," + fmt(r.fusion) + "," + fmt(r.total) + "\n";
  return s;
}

std::string pretrain_log_csv(const std::vector<PretrainLogRow>& rows) {
  std::string s = "iteration,L_l1\n";
  for (const auto& r : rows)
    s += std::to_string(r.iter) + "," + fmt(r.loss) + "\n";
  return s;
}

std::string train_log_csv(const std::vector<Stage2LogRow>& rows,
                          const LossFlags& flags) {
  std::string s = "# losses: " + flags.label() + "\n";
  s += "iteration,L_spec,L_spat,L_QNR,L_pseudo,L_d,L_total\n";
  for (const auto& r : rows)
    s += std::to_string(r.iter) + "," + fmt(r.spec) + "," + fmt(r.spat) + "," +
         fmt(r.qnr) + "," + fmt(r.pseudo) + "," + fmt(r.semantic) + "," +
         fmt(r.total) + "\n";
  return s;
}

int cmd_simulate(RunConfig cfg) {
  cfg.validate();
  const Dataset ds = build_dataset(cfg);
  save_dataset(ds, cfg.out, cfg);
  std::cout << "simulate: wrote " << ds.scenes.size() << " scenes to "
            << cfg.out << "\n";
  return kExitOk;
}

int cmd_align(RunConfig cfg, const std::string& dataset_dir) {
  const Dataset ds = load_dataset(dataset_dir);
  adopt_dataset(cfg, ds);
  cfg.validate();
  prepare_run_dir(cfg.out, cfg);
  const AlignResult res = train_stage1(ds.triplets, cfg.align_config());
  write_file(cfg.out + "/align_log.csv", align_log_csv(res.log));
  save_checkpoint(res.params, cfg.out + "/encoder.panw");
  if (res.diverged) {
    std::cerr << "align: non-finite loss at iteration " << res.completed
              << "; wrote last-good checkpoint\n";
    return kExitNumeric;
  }
  std::cout << "align: " << res.completed << " iterations, final L_s1 "
            << res.log.back().total << "\n";
  return kExitOk;
}

int cmd_pretrain(RunConfig cfg, const std::string& dataset_dir) {
  const Dataset ds = load_dataset(dataset_dir);
  adopt_dataset(cfg, ds);
  cfg.validate();
  prepare_run_dir(cfg.out, cfg);
  const PretrainResult res =
      pretrain_backbone_reduced(ds.triplets, cfg.pretrain_config());
  write_file(cfg.out + "/pretrain_log.csv", pretrain_log_csv(res.log));
  save_checkpoint(res.params, cfg.out + "/pseudo.panw");
  if (res.diverged) {
    std::cerr << "pretrain: non-finite loss at iteration " << res.completed
              << "; wrote last-good checkpoint\n";
    return kExitNumeric;
  }
  std::cout << "pretrain: " << res.completed << " iterations, final L1 "
            << res.log.back().loss << "\n";
  return kExitOk;
}

int cmd_train(RunConfig cfg, const std::string& dataset_dir,
              const std::string& stage1_ckpt, const std::string& pseudo_ckpt) {
  const Dataset ds = load_dataset(dataset_dir);
  adopt_dataset(cfg, ds);
  cfg.validate();
  const LossFlags flags = cfg.flags();
  if (flags.semantic && stage1_ckpt.empty())
    throw ConfigError(
        "train: the semantic loss needs --stage1 (adapted encoder checkpoint)");
  if (flags.pseudo && pseudo_ckpt.empty())
    throw ConfigError(
        "train: the pseudo-supervision loss needs --pseudo (reduced-resolution "
        "checkpoint)");

  ParamStore<float> encoder_params;
  if (!stage1_ckpt.empty()) {
    encoder_params = load_checkpoint(stage1_ckpt);
    const Array<float>& proj = encoder_params.at("vis.proj.w");
    if (proj.shape[1] != ds.bands)
      throw DataError("train: encoder checkpoint was built for " +
                      std::to_string(proj.shape[1]) + " bands, dataset has " +
                      std::to_string(ds.bands));
  }
  ParamStore<float> pretrained;
  if (!pseudo_ckpt.empty()) {
    pretrained = load_checkpoint(pseudo_ckpt);
    if (pretrained.at("bb.phi.w").shape[1] != ds.bands)
      throw DataError("train: pseudo checkpoint band count mismatch");
  }

  prepare_run_dir(cfg.out, cfg);
  const FusionResult res =
      train_stage2(ds.triplets, encoder_params, pretrained,
                   cfg.fusion_config());
  write_file(cfg.out + "/train_log.csv", train_log_csv(res.log, flags));
  save_checkpoint(res.params, cfg.out + "/backbone.panw");
  if (res.skipped_semantic > 0)
    std::cerr << "train: skipped the semantic term for "
              << res.skipped_semantic
              << " degenerate displacement samples\n";
  if (res.diverged) {
    std::cerr << "train: non-finite loss at iteration " << res.completed
              << "; wrote last-good checkpoint\n";
    return kExitNumeric;
  }
  std::cout << "train[" << flags.label() << "]: " << res.completed
            << " iterations, final loss " << res.log.back().total << "\n";
  return kExitOk;
}

int cmd_fuse(RunConfig cfg, const std::string& backbone_ckpt,
             const std::string& lrms_path, const std::string& pan_path,
             const std::string& band_map) {
  const ParamStore<float> backbone = load_checkpoint(backbone_ckpt);
  const Raster lrms = read_raster(lrms_path);
  const Raster pan = read_raster(pan_path);
  if (backbone.at("bb.phi.w").shape[1] != lrms.bands)
    throw DataError("fuse: checkpoint band count does not match LRMS");
  prepare_run_dir(cfg.out, cfg);
  const Raster fused = fuse_raster(backbone, lrms, pan);
  write_raster(fused, cfg.out + "/fused.panr");
  std::string map = band_map;
  if (map.empty()) map = fused.bands >= 3 ? "2,1,0" : "gray";
  const std::string preview = export_preview(fused, map);
  const std::string ext = preview.compare(0, 2, "P6") == 0 ? ".ppm" : ".pgm";
  write_file(cfg.out + "/fused" + ext, preview);
  std::cout << "fuse: wrote " << cfg.out << "/fused.panr (" << fused.width
            << "x" << fused.height << "x" << fused.bands << ")\n";
  return kExitOk;
}

int cmd_eval(RunConfig cfg, const std::string& fused_path,
             const std::string& lrms_path, const std::string& pan_path,
             const std::string& hr_path) {
  const Raster fused = read_raster(fused_path);
  const Raster lrms = read_raster(lrms_path);
  const Raster pan = read_raster(pan_path);
  Raster hr;
  const bool has_hr = !hr_path.empty();
  if (has_hr) hr = read_raster(hr_path);
  const SensorModel model = SensorModel::standard(lrms.bands, cfg.mtf_gain);
  const MetricReport rep =
      evaluate(fused, has_hr ? &hr : nullptr, lrms, pan, model);
  prepare_run_dir(cfg.out, cfg);
  write_file(cfg.out + "/metrics.csv",
             std::string(MetricReport::csv_header()) + "\n" + rep.csv_row() +
                 "\n");
  std::cout << MetricReport::csv_header() << "\n" << rep.csv_row() << "\n";
  return kExitOk;
}

namespace {

struct ReportRow {
  std::string run;
  std::string losses = "?";
  std::string variant = "?";
  std::string projection = "?";
  std::string seed = "?";
  std::vector<std::string> metrics;  // 7 metric columns
  bool complete = false;
};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (pos <= line.size()) {
    size_t next = line.find(',', pos);
    if (next == std::string::npos) next = line.size();
    out.push_back(line.substr(pos, next - pos));
    pos = next + 1;
  }
  return out;
}

}  // namespace

int cmd_report(const std::vector<std::string>& run_dirs,
               const std::string& out_file) {
  if (run_dirs.empty()) throw ConfigError("report: no run directories given");
  std::vector<ReportRow> rows;
  bool any_incomplete = false;
  for (const std::string& dir : run_dirs) {
    ReportRow row;
    row.run = fs::path(dir).filename().string();
    if (row.run.empty()) row.run = dir;
    row.metrics.assign(7, "");
    if (fs::exists(dir + "/run_config.txt")) {
      try {
        const RunConfig cfg = RunConfig::from_file(dir + "/run_config.txt");
        row.losses = cfg.flags().label();
        row.variant = cfg.prompt_variant;
        row.projection = cfg.projection;
        row.seed = std::to_string(cfg.seed);
      } catch (const Error&) {
        // leave placeholders; the row is still reported
      }
    }
    std::ifstream mf(dir + "/metrics.csv");
    if (mf) {
      std::string header, line;
      std::getline(mf, header);
      std::vector<double> acc(7, 0.0);
      std::vector<int> cnt(7, 0);
      while (std::getline(mf, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        for (size_t c = 0; c < 7 && c < cells.size(); ++c)
          if (!cells[c].empty()) {
            acc[c] += std::stod(cells[c]);
            cnt[c] += 1;
          }
      }
      int filled = 0;
      for (int c = 0; c < 7; ++c)
        if (cnt[c] > 0) {
          char buf[40];
          std::snprintf(buf, sizeof buf, "%.10g", acc[c] / cnt[c]);
          row.metrics[c] = buf;
          ++filled;
        }
      row.complete = filled > 0;
    }
    if (!row.complete) any_incomplete = true;
    rows.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end(),
            [](const ReportRow& a, const ReportRow& b) { return a.run < b.run; });

  std::string csv =
      "run,losses,prompt-variant,projection,seed,mpsnr,ergas,sam,q2n,"
      "d_lambda,d_s,qnr,status\n";
  for (const auto& r : rows) {
    csv += r.run + "," + r.losses + "," + r.variant + "," + r.projection +
           "," + r.seed;
    for (const auto& m : r.metrics) csv += "," + m;
    csv += std::string(",") + (r.complete ? "ok" : "incomplete") + "\n";
  }
  if (out_file.empty()) {
    std::cout << csv;
  } else {
    write_file(out_file, csv);
  }
  return any_incomplete ? kExitData : kExitOk;
}

}  // namespace pansharp::cli
