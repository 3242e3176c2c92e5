#include "rfsl/inference.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include "rfsl/rng.hpp"

namespace rfsl {

int argmax_lowest(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("argmax of an empty vector");
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[static_cast<size_t>(i)] > v[static_cast<size_t>(best)]) best = i;
  return best;
}

int predict(Model& model, const IQFrame& frame) { return argmax_lowest(model.logits_for(frame)); }

std::vector<int> predict_batch(Model& model, std::span<const IQFrame* const> frames) {
  auto logits = model.batch_logits(frames);
  std::vector<int> out;
  out.reserve(logits.size());
  for (const auto& row : logits) out.push_back(argmax_lowest(row));
  return out;
}

PrototypeSet build_prototypes(Model& model, std::span<const IQFrame* const> support) {
  if (support.empty()) throw std::invalid_argument("build_prototypes: empty support set");
  const int C = model.config().class_count;
  auto zs = model.batch_joint(support);
  const size_t dim = zs.front().size();

  PrototypeSet p;
  p.centers.assign(static_cast<size_t>(C), std::vector<double>(dim, 0.0));
  p.support_counts.assign(static_cast<size_t>(C), 0);
  for (size_t i = 0; i < support.size(); ++i) {
    const int k = support[i]->device_label;
    if (k < 0 || k >= C) throw std::invalid_argument("build_prototypes: label out of range");
    for (size_t j = 0; j < dim; ++j) p.centers[static_cast<size_t>(k)][j] += zs[i][j];
    ++p.support_counts[static_cast<size_t>(k)];
  }
  for (int k = 0; k < C; ++k) {
    if (p.support_counts[static_cast<size_t>(k)] == 0)
      throw std::invalid_argument("build_prototypes: class " + std::to_string(k) +
                                  " has no support frames");
    for (auto& v : p.centers[static_cast<size_t>(k)]) v /= p.support_counts[static_cast<size_t>(k)];
  }
  return p;
}

int nearest_prototype(const PrototypeSet& prototypes, std::span<const double> z) {
  if (prototypes.centers.empty()) throw std::invalid_argument("nearest_prototype: no prototypes");
  std::vector<double> score;
  score.reserve(prototypes.centers.size());
  for (const auto& c : prototypes.centers) {
    if (c.size() != z.size())
      throw std::invalid_argument("nearest_prototype: dimension mismatch");
    double ss = 0.0;
    for (size_t j = 0; j < z.size(); ++j) {
      const double d = z[j] - c[j];
      ss += d * d;
    }
    score.push_back(-std::sqrt(ss));
  }
  return argmax_lowest(score);
}

int fewshot_predict(Model& model, const PrototypeSet& prototypes, const IQFrame& frame) {
  return nearest_prototype(prototypes, model.joint_representation(frame));
}

StandardEval evaluate_standard(Model& model, const Dataset& dataset) {
  if (dataset.frames.empty()) throw std::invalid_argument("evaluate_standard: empty dataset");
  std::vector<const IQFrame*> ptrs;
  ptrs.reserve(dataset.frames.size());
  for (const auto& f : dataset.frames) ptrs.push_back(&f);
  auto pred = predict_batch(model, ptrs);

  StandardEval ev;
  std::map<int, std::pair<int, int>> per_domain;  // label -> (correct, total)
  int correct = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const bool ok = pred[i] == dataset.frames[i].device_label;
    correct += ok ? 1 : 0;
    auto& [c, n] = per_domain[dataset.frames[i].domain_label];
    c += ok ? 1 : 0;
    ++n;
  }
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());
  for (const auto& [label, cn] : per_domain)
    ev.per_domain.push_back(
        {label, cn.second, static_cast<double>(cn.first) / static_cast<double>(cn.second)});
  return ev;
}

FewShotResult evaluate_fewshot(Model& model, const Dataset& pool,
                               const FewShotProtocol& protocol) {
  if (protocol.n_shot < 1 || protocol.n_query < 1 || protocol.repeats < 1)
    throw std::invalid_argument("few-shot protocol: n_shot, n_query, repeats must be positive");
  const int C = model.config().class_count;
  std::vector<std::vector<int>> by_class(static_cast<size_t>(C));
  for (size_t i = 0; i < pool.frames.size(); ++i) {
    const int k = pool.frames[i].device_label;
    if (k < 0 || k >= C) throw std::invalid_argument("few-shot pool: label out of range");
    by_class[static_cast<size_t>(k)].push_back(static_cast<int>(i));
  }
  const int need = protocol.n_shot + protocol.n_query;
  for (int k = 0; k < C; ++k)
    if (static_cast<int>(by_class[static_cast<size_t>(k)].size()) < need)
      throw std::invalid_argument("few-shot pool: class " + std::to_string(k) + " has " +
                                  std::to_string(by_class[static_cast<size_t>(k)].size()) +
                                  " frames, episode needs " + std::to_string(need));

  // Pass 1: draw every episode up front, so the involved frames can be
  // embedded once in large chunks instead of per episode.
  struct Episode {
    std::vector<int> support;  // frame indices into the pool
    std::vector<int> query;
  };
  std::vector<Episode> episodes(static_cast<size_t>(protocol.repeats));
  std::vector<int> involved;
  for (int r = 0; r < protocol.repeats; ++r) {
    auto& ep = episodes[static_cast<size_t>(r)];
    for (int k = 0; k < C; ++k) {
      std::vector<int> idx = by_class[static_cast<size_t>(k)];
      auto rng = make_rng(mix_seed(protocol.seed, static_cast<uint64_t>(r),
                                   static_cast<uint64_t>(k)));
      std::shuffle(idx.begin(), idx.end(), rng);
      ep.support.insert(ep.support.end(), idx.begin(), idx.begin() + protocol.n_shot);
      ep.query.insert(ep.query.end(), idx.begin() + protocol.n_shot, idx.begin() + need);
    }
    involved.insert(involved.end(), ep.support.begin(), ep.support.end());
    involved.insert(involved.end(), ep.query.begin(), ep.query.end());
  }
  std::sort(involved.begin(), involved.end());
  involved.erase(std::unique(involved.begin(), involved.end()), involved.end());

  std::vector<const IQFrame*> ptrs;
  ptrs.reserve(involved.size());
  for (int i : involved) ptrs.push_back(&pool.frames[static_cast<size_t>(i)]);
  auto zs = model.batch_joint(ptrs);
  std::unordered_map<int, const std::vector<double>*> z_of;
  for (size_t i = 0; i < involved.size(); ++i) z_of[involved[i]] = &zs[i];

  // Pass 2: score each episode against prototypes averaged over its support.
  FewShotResult res;
  const size_t dim = zs.empty() ? 0 : zs.front().size();
  for (const auto& ep : episodes) {
    PrototypeSet proto;
    proto.centers.assign(static_cast<size_t>(C), std::vector<double>(dim, 0.0));
    proto.support_counts.assign(static_cast<size_t>(C), 0);
    for (int i : ep.support) {
      const int k = pool.frames[static_cast<size_t>(i)].device_label;
      const auto& z = *z_of.at(i);
      for (size_t j = 0; j < dim; ++j) proto.centers[static_cast<size_t>(k)][j] += z[j];
      ++proto.support_counts[static_cast<size_t>(k)];
    }
    for (int k = 0; k < C; ++k)
      for (auto& v : proto.centers[static_cast<size_t>(k)])
        v /= proto.support_counts[static_cast<size_t>(k)];

    int correct = 0;
    for (int i : ep.query)
      if (nearest_prototype(proto, *z_of.at(i)) == pool.frames[static_cast<size_t>(i)].device_label)
        ++correct;
    res.per_repeat.push_back(static_cast<double>(correct) /
                             static_cast<double>(ep.query.size()));
  }

  const double n = static_cast<double>(res.per_repeat.size());
  res.mean_accuracy = std::accumulate(res.per_repeat.begin(), res.per_repeat.end(), 0.0) / n;
  double ss = 0.0;
  for (double a : res.per_repeat) ss += (a - res.mean_accuracy) * (a - res.mean_accuracy);
  res.std_accuracy = std::sqrt(ss / n);
  return res;
}

}  // namespace rfsl
