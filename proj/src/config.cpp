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
#include "pansharp/config.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace pansharp {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: '" + key + "' expects a boolean, got '" + v + "'");
}

int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const int64_t r = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects an integer, got '" + v +
                      "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + v +
                      "'");
  }
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void RunConfig::apply_line(const std::string& key, const std::string& value) {
  if (key == "seed")
    seed = uint64_t(parse_int(key, value));
  else if (key == "scenes")
    scenes = int(parse_int(key, value));
  else if (key == "scene-size")
    scene_size = int(parse_int(key, value));
  else if (key == "bands")
    bands = int(parse_int(key, value));
  else if (key == "batch")
    batch = int(parse_int(key, value));
  else if (key == "iterations")
    iterations = int(parse_int(key, value));
  else if (key == "lr")
    lr = parse_double(key, value);
  else if (key == "mtf-gain")
    mtf_gain = parse_double(key, value);
  else if (key == "prompt-variant")
    prompt_variant = value;
  else if (key == "projection")
    projection = value;
  else if (key == "loss-recon")
    loss_recon = parse_bool(key, value);
  else if (key == "loss-qnr")
    loss_qnr = parse_bool(key, value);
  else if (key == "loss-pseudo")
    loss_pseudo = parse_bool(key, value);
  else if (key == "loss-semantic")
    loss_semantic = parse_bool(key, value);
  else if (key == "semantic-weight")
    semantic_weight = parse_double(key, value);
  else if (key == "out")
    out = value;
  else
    throw ConfigError("config: unknown key '" + key + "'");
}

void RunConfig::validate() const {
  if (scenes < 1) throw ConfigError("config: scenes must be >= 1");
  if (scene_size < 8 || scene_size % 4 != 0)
    throw ConfigError("config: scene-size must be a multiple of 4 and >= 8");
  if (bands != 4 && bands != 8)
    throw ConfigError("config: bands must be 4 or 8");
  if (batch < 1) throw ConfigError("config: batch must be >= 1");
  if (iterations < 1) throw ConfigError("config: iterations must be >= 1");
  if (lr <= 0) throw ConfigError("config: lr must be positive");
  if (!(mtf_gain > 0 && mtf_gain < 1))
    throw ConfigError("config: mtf-gain must lie in (0,1)");
  if (semantic_weight < 0)
    throw ConfigError("config: semantic-weight must be >= 0");
  variant();
  projection_mode();
}

std::string RunConfig::serialize() const {
  std::string s;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%" PRIu64, seed);
  s += std::string("seed=") + buf + "\n";
  s += "scenes=" + std::to_string(scenes) + "\n";
  s += "scene-size=" + std::to_string(scene_size) + "\n";
  s += "bands=" + std::to_string(bands) + "\n";
  s += "batch=" + std::to_string(batch) + "\n";
  s += "iterations=" + std::to_string(iterations) + "\n";
  s += "lr=" + fmt_double(lr) + "\n";
  s += "mtf-gain=" + fmt_double(mtf_gain) + "\n";
  s += "prompt-variant=" + prompt_variant + "\n";
  s += "projection=" + projection + "\n";
  s += std::string("loss-recon=") + (loss_recon ? "true" : "false") + "\n";
  s += std::string("loss-qnr=") + (loss_qnr ? "true" : "false") + "\n";
  s += std::string("loss-pseudo=") + (loss_pseudo ? "true" : "false") + "\n";
  s += std::string("loss-semantic=") + (loss_semantic ? "true" : "false") +
       "\n";
  s += "semantic-weight=" + fmt_double(semantic_weight) + "\n";
  s += "out=" + out + "\n";
  return s;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("config: cannot open '" + path + "'");
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) +
                        " is not key=value in '" + path + "'");
    cfg.apply_line(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

HrmsVariant RunConfig::variant() const {
  if (prompt_variant == "wald") return HrmsVariant::Wald;
  if (prompt_variant == "khan") return HrmsVariant::Khan;
  if (prompt_variant == "noise") return HrmsVariant::Noise;
  if (prompt_variant == "desc1") return HrmsVariant::DescI;
  if (prompt_variant == "desc2") return HrmsVariant::DescII;
  throw ConfigError("config: unknown prompt-variant '" + prompt_variant + "'");
}

ProjectionMode RunConfig::projection_mode() const {
  if (projection == "conv") return ProjectionMode::Conv;
  if (projection == "pca") return ProjectionMode::PCA;
  if (projection == "rgb") return ProjectionMode::RGB;
  if (projection == "gbnir") return ProjectionMode::GBNIR;
  throw ConfigError("config: unknown projection '" + projection + "'");
}

EncoderConfig RunConfig::encoder_config() const {
  EncoderConfig e;
  e.bands = bands;
  e.projection = projection_mode();
  return e;
}

AlignConfig RunConfig::align_config() const {
  AlignConfig a;
  a.encoder = encoder_config();
  a.variant = variant();
  a.batch = batch;
  a.iterations = iterations;
  a.lr = lr;
  a.seed = seed;
  return a;
}

PretrainConfig RunConfig::pretrain_config() const {
  PretrainConfig p;
  p.bands = bands;
  p.batch = batch;
  p.iterations = iterations;
  p.lr = lr;
  p.seed = seed;
  p.model = sensor();
  return p;
}

FusionConfig RunConfig::fusion_config() const {
  FusionConfig f;
  f.encoder = encoder_config();
  f.variant = variant();
  f.model = sensor();
  f.flags = flags();
  f.semantic_weight = semantic_weight;
  f.batch = batch;
  f.iterations = iterations;
  f.lr = lr;
  f.seed = seed;
  return f;
}

// ---------------------------------------------------------------------------
// Dataset build / io

Dataset build_dataset(const RunConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.bands = cfg.bands;
  ds.scene_size = cfg.scene_size;
  ds.model = cfg.sensor();
  for (int i = 0; i < cfg.scenes; ++i) {
    Scene s = synth_scene(cfg.seed + uint64_t(i), cfg.scene_size, cfg.bands);
    s.id = i;
    ds.triplets.push_back(make_triplet(s, ds.model, true));
    ds.scenes.push_back(std::move(s));
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& dir,
                  const RunConfig& cfg) {
  fs::create_directories(dir);
  {
    std::ofstream f(dir + "/run_config.txt", std::ios::binary);
    if (!f) throw DataError("dataset: cannot write config in '" + dir + "'");
    f << cfg.serialize();
  }
  std::string manifest = "panr-dataset 1\n";
  manifest += "scenes=" + std::to_string(ds.scenes.size()) + "\n";
  manifest += "size=" + std::to_string(ds.scene_size) + "\n";
  manifest += "bands=" + std::to_string(ds.bands) + "\n";
  manifest += "mtf-gain=" + fmt_double(double(ds.model.mtf_gains[0])) + "\n";
  for (size_t i = 0; i < ds.scenes.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "scene_%04zu", i);
    const std::string sdir = dir + "/" + name;
    fs::create_directories(sdir);
    write_raster(ds.scenes[i].hr_ms, sdir + "/hr.panr");
    write_raster(ds.triplets[i].lrms, sdir + "/lrms.panr");
    write_raster(ds.triplets[i].pan, sdir + "/pan.panr");
    if (ds.triplets[i].pseudo_hrms)
      write_raster(*ds.triplets[i].pseudo_hrms, sdir + "/pseudo.panr");
    manifest += std::string("scene=") + name + "\n";
  }
  std::ofstream f(dir + "/manifest.txt", std::ios::binary);
  if (!f) throw DataError("dataset: cannot write manifest in '" + dir + "'");
  f << manifest;
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream f(dir + "/manifest.txt");
  if (!f) throw DataError("dataset: missing manifest in '" + dir + "'");
  std::string line;
  if (!std::getline(f, line) || trim(line) != "panr-dataset 1")
    throw DataError("dataset: unrecognized manifest in '" + dir + "'");
  Dataset ds;
  double gain = 0.3;
  std::vector<std::string> names;
  while (std::getline(f, line)) {
    const std::string t = trim(line);
    if (t.empty()) continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw DataError("dataset: malformed manifest line '" + t + "'");
    const std::string key = t.substr(0, eq), value = t.substr(eq + 1);
    if (key == "scenes") {
      // count cross-checked below
    } else if (key == "size") {
      ds.scene_size = int(parse_int(key, value));
    } else if (key == "bands") {
      ds.bands = int(parse_int(key, value));
    } else if (key == "mtf-gain") {
      gain = parse_double(key, value);
    } else if (key == "scene") {
      names.push_back(value);
    } else {
      throw DataError("dataset: unknown manifest key '" + key + "'");
    }
  }
  if (names.empty()) throw DataError("dataset: no scenes listed in manifest");
  ds.model = SensorModel::standard(ds.bands, gain);
  for (size_t i = 0; i < names.size(); ++i) {
    const std::string sdir = dir + "/" + names[i];
    Scene s;
    s.id = int64_t(i);
    s.hr_ms = read_raster(sdir + "/hr.panr");
    SceneTriplet t;
    t.scene_id = int64_t(i);
    t.lrms = read_raster(sdir + "/lrms.panr");
    t.pan = read_raster(sdir + "/pan.panr");
    if (fs::exists(sdir + "/pseudo.panr"))
      t.pseudo_hrms = read_raster(sdir + "/pseudo.panr");
    ds.scenes.push_back(std::move(s));
    ds.triplets.push_back(std::move(t));
  }
  return ds;
}

}  // namespace pansharp
