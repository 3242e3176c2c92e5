#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rfsl/model.hpp"
#include "rfsl/signal.hpp"

namespace rfsl {

// One mean vector per class in the pre-head joint space (dimension
// d_h + d_l); the output head plays no part in few-shot matching.
struct PrototypeSet {
  std::vector<std::vector<double>> centers;  // indexed by class
  std::vector<int> support_counts;
};

// Argmax over output-head logits; ties break to the lowest class index.
int argmax_lowest(std::span<const double> v);
int predict(Model& model, const IQFrame& frame);
std::vector<int> predict_batch(Model& model, std::span<const IQFrame* const> frames);

// c_k = mean of joint representations over class-k support frames. Every
// class in [0, class_count) must appear at least once.
PrototypeSet build_prototypes(Model& model, std::span<const IQFrame* const> support);

// Nearest prototype under Euclidean distance (max of -||z - c_k||), ties to
// the lowest class index.
int nearest_prototype(const PrototypeSet& prototypes, std::span<const double> z);
int fewshot_predict(Model& model, const PrototypeSet& prototypes, const IQFrame& frame);

struct DomainAccuracy {
  int domain_label = 0;
  int frame_count = 0;
  double accuracy = 0.0;
};

struct StandardEval {
  double accuracy = 0.0;  // over every frame
  std::vector<DomainAccuracy> per_domain;
};

StandardEval evaluate_standard(Model& model, const Dataset& dataset);

struct FewShotProtocol {
  int n_shot = 5;    // 1 or 5 in the headline protocol
  int n_query = 30;  // query instances per class per episode
  int repeats = 30;  // independent episodes
  uint64_t seed = 0;
};

struct FewShotResult {
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // population std over episodes
  std::vector<double> per_repeat;
};

// Runs `repeats` seeded episodes against one labeled pool: per class, draw
// n_shot support + n_query query frames without overlap, build prototypes
// from the support, and score the queries by nearest prototype.
FewShotResult evaluate_fewshot(Model& model, const Dataset& pool, const FewShotProtocol& protocol);

}  // namespace rfsl
