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
#include <vector>

#include "pansharp/config.hpp"

namespace pansharp::cli {

// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric divergence.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

// Default output directory: $PANSHARP_OUT/<command> or runs/<command>.
std::string default_out(const std::string& command);

int cmd_simulate(RunConfig cfg);
int cmd_align(RunConfig cfg, const std::string& dataset_dir);
int cmd_pretrain(RunConfig cfg, const std::string& dataset_dir);
int cmd_train(RunConfig cfg, const std::string& dataset_dir,
              const std::string& stage1_ckpt, const std::string& pseudo_ckpt);
int cmd_fuse(RunConfig cfg, const std::string& backbone_ckpt,
             const std::string& lrms_path, const std::string& pan_path,
             const std::string& band_map);
int cmd_eval(RunConfig cfg, const std::string& fused_path,
             const std::string& lrms_path, const std::string& pan_path,
             const std::string& hr_path);
int cmd_report(const std::vector<std::string>& run_dirs,
               const std::string& out_file);

// Shared CSV writers (also used by the acceptance suite).
std::string align_log_csv(const std::vector<Stage1LogRow>& rows);
std::string pretrain_log_csv(const std::vector<PretrainLogRow>& rows);
std::string train_log_csv(const std::vector<Stage2LogRow>& rows,
                          const LossFlags& flags);

int exit_code_for(const std::exception& e);

}  // namespace pansharp::cli
