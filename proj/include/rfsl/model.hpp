#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rfsl/backbone.hpp"
#include "rfsl/embedder.hpp"
#include "rfsl/optim.hpp"
#include "rfsl/shapelet.hpp"
#include "rfsl/signal.hpp"
#include "rfsl/tape.hpp"

namespace rfsl {

struct ModelConfig {
  int frame_length = 256;
  int class_count = 8;
  int d_l = 64;  // width of the projected shapelet feature
  uint64_t seed = 0;
  std::string pooling = "mean";  // recorded for provenance; only mean is implemented
  EmbedderConfig embedder;
  BackboneConfig backbone;
  ShapeletConfig shapelets;
  // Governs all parameter groups; the restriction to backbone groups is
  // {positional_embeddings, layer_norms}, i.e. attention and FFN stay frozen.
  FreezePolicy freeze{{"embedder", "positional_embeddings", "layer_norms", "shapelet_bank",
                       "local_projection", "output_head"}};
};

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& json_text);

// Owns every parameter tensor, grouped with freeze flags. Movable, not
// copyable (parameter groups hold stable pointers into the tensor store).
class Model {
 public:
  explicit Model(const ModelConfig& cfg);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  // Single source of truth for names/shapes/groups/initialization; the
  // parameter census works straight off this, without allocating.
  static std::vector<TensorSpec> tensor_specs(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  int sequence_length() const;  // l_seq produced by the embedder

  std::span<const ParameterGroup> groups() const { return groups_; }
  std::span<ParameterGroup> groups() { return groups_; }
  Tensor& tensor(const std::string& name);
  const Tensor& tensor(const std::string& name) const;
  std::vector<const Tensor*> shapelet_tensors() const;

  // Replaces the jitter-only shapelet init with data-sampled windows.
  void init_shapelets_from_data(const Dataset& train, uint64_t seed);

  // Bound parameter nodes for one tape; bind once per tape and reuse across
  // every frame recorded on it.
  struct Nodes {
    std::vector<Value> embedder_params;
    BackboneNodes backbone;
    std::vector<Value> shapelets;
    Value lp_w, lp_b;
    Value head_w, head_b;
  };
  Nodes bind(Tape& tape);

  struct Forward {
    Value z;       // [1, d_h + d_l] joint representation
    Value logits;  // [1, C]
    Value activ;   // [1, K]
  };
  Forward forward_joint(Tape& tape, const Nodes& nodes, const IQFrame& frame) const;

  struct BatchForward {
    Value logits;       // [B, C]
    Value activations;  // [B, K]
  };
  BatchForward forward_batch(Tape& tape, const Nodes& nodes,
                             std::span<const IQFrame* const> frames) const;

  // Forward-only conveniences (grad-disabled tape under the hood). The tape
  // path is the single forward implementation, so train and eval agree.
  std::vector<double> logits_for(const IQFrame& frame);
  std::vector<double> joint_representation(const IQFrame& frame);
  // Chunked variants: one tape (and one parameter bind) per chunk.
  std::vector<std::vector<double>> batch_logits(std::span<const IQFrame* const> frames,
                                                int chunk = 64);
  std::vector<std::vector<double>> batch_joint(std::span<const IQFrame* const> frames,
                                               int chunk = 64);
  // Plain-kernel activations; used by explanation outputs.
  std::vector<double> activation_values(const IQFrame& frame) const;

  void save_checkpoint(const std::filesystem::path& path,
                       const std::string& metadata_json = "{}") const;
  static std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path,
                                                std::string* metadata_json = nullptr);

  // Versioned named-tensor file (import interface for pre-trained weights).
  void import_weights(const std::filesystem::path& path);

 private:
  ModelConfig cfg_;
  std::vector<Tensor> tensors_;
  std::unordered_map<std::string, size_t> index_;
  std::vector<ParameterGroup> groups_;
};

void write_weight_file(const std::filesystem::path& path, std::span<const Tensor* const> tensors);

// Census over live groups and straight from a config (no allocation).
double trainable_ratio(std::span<const ParameterGroup> groups);
int64_t total_param_count(const ModelConfig& cfg);
int64_t trainable_param_count(const ModelConfig& cfg);

}  // namespace rfsl
