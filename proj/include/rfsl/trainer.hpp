#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "rfsl/model.hpp"
#include "rfsl/objective.hpp"
#include "rfsl/signal.hpp"

namespace rfsl {

struct TrainConfig {
  ModelConfig model;
  double lr = 1e-4;
  int max_epochs = 200;
  int batch_size = 64;
  uint64_t seed = 0;
  LossWeights weights;  // lambda1/lambda2 both default 1e-4
  // Algorithm start: sample the shapelet bank from training windows instead
  // of keeping the pure Gaussian init.
  bool data_init_shapelets = true;
};

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& json_text);

struct EpochStats {
  int epoch = 0;
  double cls = 0.0;  // per-frame means over the epoch
  double spr = 0.0;
  double div = 0.0;
  double val_accuracy = 0.0;
};

struct TrainResult {
  std::unique_ptr<Model> model;  // final-epoch weights
  std::vector<EpochStats> history;
  int best_epoch = -1;          // 1-based; -1 when no validation set was given
  double best_val_accuracy = 0.0;
  std::filesystem::path final_checkpoint;  // empty when out_dir was empty
  std::filesystem::path best_checkpoint;
};

// Mini-batch training: seeded shuffle per epoch, composite loss, Adam on the
// trainable groups only. Logs one line per epoch (epoch, L_cls, L_spr, L_div,
// val accuracy) to `log` when given; writes best-val and final checkpoints
// into out_dir when given. Aborts with a diagnostic naming the offending
// loss term if any term goes non-finite.
TrainResult train(const TrainConfig& cfg, const Dataset& train_set, const Dataset& val_set,
                  const std::filesystem::path& out_dir = {}, std::ostream* log = nullptr);

}  // namespace rfsl
