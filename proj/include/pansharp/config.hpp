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
#pragma once

#include <string>

#include "pansharp/fusion.hpp"

namespace pansharp {

// Flat key=value run configuration. Serialized verbatim into every output
// directory; parsing validates the full schema (unknown keys are errors).
struct RunConfig {
  uint64_t seed = 17;
  int scenes = 32;
  int scene_size = 64;  // HR patch edge; LRMS is scene_size / 4
  int bands = 4;
  int batch = 32;
  int iterations = 1000;
  double lr = 0.003;
  double mtf_gain = 0.3;
  std::string prompt_variant = "wald";  // wald|khan|noise|desc1|desc2
  std::string projection = "conv";      // conv|pca|rgb|gbnir
  bool loss_recon = true;
  bool loss_qnr = true;
  bool loss_pseudo = true;
  bool loss_semantic = true;
  double semantic_weight = 1.0;
  std::string out;

  void validate() const;
  std::string serialize() const;
  static RunConfig from_file(const std::string& path);
  void apply_line(const std::string& key, const std::string& value);

  HrmsVariant variant() const;
  ProjectionMode projection_mode() const;
  SensorModel sensor() const { return SensorModel::standard(bands, mtf_gain); }
  EncoderConfig encoder_config() const;
  LossFlags flags() const {
    return LossFlags{loss_recon, loss_qnr, loss_pseudo, loss_semantic};
  }
  AlignConfig align_config() const;
  PretrainConfig pretrain_config() const;
  FusionConfig fusion_config() const;
};

// On-disk dataset produced by the simulate command.
struct Dataset {
  int bands = 0;
  int scene_size = 0;
  SensorModel model;
  std::vector<Scene> scenes;
  std::vector<SceneTriplet> triplets;
};

Dataset build_dataset(const RunConfig& cfg);
void save_dataset(const Dataset& ds, const std::string& dir,
                  const RunConfig& cfg);
Dataset load_dataset(const std::string& dir);

}  // namespace pansharp
