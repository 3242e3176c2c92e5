#include "rfsl/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <stdexcept>

#include "rfsl/inference.hpp"
#include "rfsl/optim.hpp"
#include "rfsl/rng.hpp"

namespace rfsl {

namespace {

using nlohmann::json;

void check_train_config(const TrainConfig& cfg) {
  if (cfg.lr <= 0.0) throw std::invalid_argument("training config: lr must be positive");
  if (cfg.batch_size < 1) throw std::invalid_argument("training config: batch_size must be >= 1");
  if (cfg.max_epochs < 1) throw std::invalid_argument("training config: max_epochs must be >= 1");
  if (cfg.weights.lambda1 < 0.0 || cfg.weights.lambda2 < 0.0)
    throw std::invalid_argument("training config: loss weights must be non-negative");
}

std::string checkpoint_metadata(const TrainConfig& cfg, const EpochStats& at, int best_epoch) {
  json j;
  j["epoch"] = at.epoch;
  j["seed"] = cfg.seed;
  j["lambda1"] = cfg.weights.lambda1;
  j["lambda2"] = cfg.weights.lambda2;
  j["loss"] = {{"cls", at.cls}, {"spr", at.spr}, {"div", at.div}};
  j["val_accuracy"] = at.val_accuracy;
  j["best_epoch"] = best_epoch;
  return j.dump();
}

}  // namespace

std::string train_config_to_json(const TrainConfig& cfg) {
  json j = json::parse(model_config_to_json(cfg.model));
  j["train"] = {{"lr", cfg.lr},
                {"max_epochs", cfg.max_epochs},
                {"batch_size", cfg.batch_size},
                {"seed", cfg.seed},
                {"lambda1", cfg.weights.lambda1},
                {"lambda2", cfg.weights.lambda2},
                {"data_init_shapelets", cfg.data_init_shapelets}};
  return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& json_text) {
  TrainConfig cfg;
  cfg.model = model_config_from_json(json_text);
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("training config parse error: ") + e.what());
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    TrainConfig def;
    cfg.lr = t.value("lr", def.lr);
    cfg.max_epochs = t.value("max_epochs", def.max_epochs);
    cfg.batch_size = t.value("batch_size", def.batch_size);
    cfg.seed = t.value("seed", def.seed);
    cfg.weights.lambda1 = t.value("lambda1", def.weights.lambda1);
    cfg.weights.lambda2 = t.value("lambda2", def.weights.lambda2);
    cfg.data_init_shapelets = t.value("data_init_shapelets", def.data_init_shapelets);
  }
  return cfg;
}

TrainResult train(const TrainConfig& cfg, const Dataset& train_set, const Dataset& val_set,
                  const std::filesystem::path& out_dir, std::ostream* log) {
  check_train_config(cfg);
  if (train_set.frames.empty()) throw std::invalid_argument("train: empty training set");
  const int C = cfg.model.class_count;
  for (const auto& f : train_set.frames)
    if (f.device_label < 0 || f.device_label >= C)
      throw std::invalid_argument("train: label out of range for configured class count");

  TrainResult result;
  result.model = std::make_unique<Model>(cfg.model);
  Model& model = *result.model;
  if (cfg.data_init_shapelets)
    model.init_shapelets_from_data(train_set, mix_seed(cfg.seed, 0x5A9B));

  AdamConfig adam;
  adam.lr = cfg.lr;
  AdamState state;
  zero_grads(model.groups());

  const size_t N = train_set.frames.size();
  std::vector<int> order(N);
  std::iota(order.begin(), order.end(), 0);

  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    auto rng = make_rng(mix_seed(cfg.seed, static_cast<uint64_t>(epoch), 0xE90C));
    std::shuffle(order.begin(), order.end(), rng);

    double sum_cls = 0.0, sum_spr = 0.0, sum_div = 0.0;
    for (size_t begin = 0; begin < N; begin += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(N, begin + static_cast<size_t>(cfg.batch_size));
      std::vector<const IQFrame*> frames;
      std::vector<int> labels;
      frames.reserve(end - begin);
      for (size_t i = begin; i < end; ++i) {
        const IQFrame& f = train_set.frames[static_cast<size_t>(order[i])];
        frames.push_back(&f);
        labels.push_back(f.device_label);
      }

      Tape tape(true);
      Model::Nodes nodes = model.bind(tape);
      Model::BatchForward fw = model.forward_batch(tape, nodes, frames);
      TotalLoss loss = total_loss(tape, fw.logits, labels, fw.activations, cfg.weights);

      const double cls_v = tape.scalar(loss.cls);
      const double spr_v = tape.scalar(loss.spr);
      const double div_v = tape.scalar(loss.div);
      const size_t batch_index = begin / static_cast<size_t>(cfg.batch_size);
      for (const auto& [name, v] :
           {std::pair<const char*, double>{"classification", cls_v},
            {"sparsity", spr_v},
            {"diversity", div_v}})
        if (!std::isfinite(v))
          throw std::runtime_error("training aborted: non-finite " + std::string(name) +
                                   " loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_index));

      tape.backward(loss.total);
      adam_step(model.groups(), state, adam);
      zero_grads(model.groups());

      const double bs = static_cast<double>(end - begin);
      sum_cls += cls_v * bs;
      sum_spr += spr_v * bs;
      sum_div += div_v * bs;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.cls = sum_cls / static_cast<double>(N);
    stats.spr = sum_spr / static_cast<double>(N);
    stats.div = sum_div / static_cast<double>(N);
    if (!val_set.frames.empty()) {
      stats.val_accuracy = evaluate_standard(model, val_set).accuracy;
      if (result.best_epoch < 0 || stats.val_accuracy > result.best_val_accuracy) {
        result.best_epoch = epoch;
        result.best_val_accuracy = stats.val_accuracy;
        if (!out_dir.empty()) {
          result.best_checkpoint = out_dir / "checkpoint_best.bin";
          model.save_checkpoint(result.best_checkpoint,
                                checkpoint_metadata(cfg, stats, result.best_epoch));
        }
      }
    }
    result.history.push_back(stats);

    if (log) {
      *log << "epoch " << std::setw(3) << epoch << "  cls " << std::scientific
           << std::setprecision(6) << stats.cls << "  spr " << stats.spr << "  div " << stats.div
           << std::defaultfloat << "  val_acc " << std::fixed << std::setprecision(4)
           << stats.val_accuracy << std::defaultfloat << "\n";
      log->flush();
    }
  }

  if (!out_dir.empty()) {
    result.final_checkpoint = out_dir / "checkpoint_final.bin";
    model.save_checkpoint(result.final_checkpoint,
                          checkpoint_metadata(cfg, result.history.back(), result.best_epoch));
    // A run without validation still leaves both files in place.
    if (result.best_checkpoint.empty()) {
      result.best_checkpoint = out_dir / "checkpoint_best.bin";
      std::filesystem::copy_file(result.final_checkpoint, result.best_checkpoint,
                                 std::filesystem::copy_options::overwrite_existing);
    }
  }
  return result;
}

}  // namespace rfsl
