// Operator entry point: dataset synthesis, training, evaluation, few-shot
// protocols, explanation export, faithfulness reports, gradient checks, and
// checkpoint inspection, all from one binary. Model/training parameters come
// from a JSON config (schema in docs/config.md); paths and seeds are flags.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rfsl/explain.hpp"
#include "rfsl/gradcheck.hpp"
#include "rfsl/inference.hpp"
#include "rfsl/model.hpp"
#include "rfsl/rng.hpp"
#include "rfsl/synth.hpp"
#include "rfsl/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rfsl;

namespace {

json read_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  return json::parse(in);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return text;
}

// Channels in config are [[re, im], ...] tap lists; they are L2-normalized
// here so profiles can be written in round numbers.
ChannelProfile channel_from_json(const json& j) {
  ChannelProfile c;
  c.snr_db = j.value("snr_db", c.snr_db);
  c.domain_label = j.value("domain_label", c.domain_label);
  if (j.contains("taps")) {
    c.multipath_taps.clear();
    for (const auto& t : j.at("taps")) {
      if (!t.is_array() || t.size() != 2)
        throw std::runtime_error("synth config: each tap must be a [re, im] pair");
      c.multipath_taps.emplace_back(t[0].get<double>(), t[1].get<double>());
    }
  }
  double energy = 0.0;
  for (auto t : c.multipath_taps) energy += std::norm(t);
  if (energy <= 0.0) throw std::runtime_error("synth config: channel taps have zero energy");
  for (auto& t : c.multipath_taps) t /= std::sqrt(energy);
  return c;
}

struct SynthSpec {
  int device_count = 8;
  double spread = 1.0;
  int frames_per_cell = 500;
  int frame_length = 256;
  std::vector<ChannelProfile> channels;
  SplitRatios split;
  bool emit_splits = true;
};

SynthSpec synth_spec_from_json(const json& root) {
  SynthSpec s;
  // Stock profile: two source environments (clean line-of-sight, mild echo).
  s.channels.push_back({28.0, {{1.0, 0.0}}, 0});
  s.channels.push_back({22.0, {{0.955, 0.0}, {0.25, 0.16}}, 1});
  for (auto& c : s.channels) {
    double e = 0.0;
    for (auto t : c.multipath_taps) e += std::norm(t);
    for (auto& t : c.multipath_taps) t /= std::sqrt(e);
  }
  if (!root.contains("synth")) return s;
  const json& j = root.at("synth");
  s.device_count = j.value("device_count", s.device_count);
  s.spread = j.value("spread", s.spread);
  s.frames_per_cell = j.value("frames_per_cell", s.frames_per_cell);
  s.frame_length = j.value("frame_length", s.frame_length);
  s.emit_splits = j.value("emit_splits", s.emit_splits);
  if (j.contains("channels")) {
    s.channels.clear();
    for (const auto& cj : j.at("channels")) s.channels.push_back(channel_from_json(cj));
  }
  if (j.contains("split")) {
    const json& sp = j.at("split");
    s.split.train = sp.value("train", s.split.train);
    s.split.val = sp.value("val", s.split.val);
    s.split.test = sp.value("test", s.split.test);
  }
  return s;
}

void write_dataset(const Dataset& ds, const fs::path& dir, const std::string& stem) {
  save_dataset(ds, dir / (stem + ".manifest"), dir / (stem + ".bin"));
}

Dataset filter_domain(const Dataset& ds, int domain) {
  Dataset out;
  out.frame_length = ds.frame_length;
  out.class_count = ds.class_count;
  for (const auto& f : ds.frames)
    if (f.domain_label == domain) out.frames.push_back(f);
  if (out.frames.empty())
    throw std::runtime_error("no frames with domain label " + std::to_string(domain));
  return out;
}

int cmd_synth(const json& cfg, uint64_t seed, const fs::path& out_dir) {
  SynthSpec spec = synth_spec_from_json(cfg);
  auto fleet = make_device_fleet(spec.device_count, spec.spread, mix_seed(seed, 0xF1EE7));
  Dataset ds = synth_dataset(fleet, spec.channels, spec.frames_per_cell, mix_seed(seed, 0xDA7A),
                             spec.frame_length);
  fs::create_directories(out_dir);
  write_dataset(ds, out_dir, "full");
  std::cout << "wrote " << (out_dir / "full.manifest").string() << " (" << ds.frames.size()
            << " frames, " << spec.device_count << " devices, " << ds.domain_labels().size()
            << " domains)\n";
  if (spec.emit_splits && !ds.frames.empty()) {
    auto split = split_dataset(ds, spec.split, mix_seed(seed, 0x5871));
    write_dataset(split.train, out_dir, "train");
    write_dataset(split.val, out_dir, "val");
    write_dataset(split.test, out_dir, "test");
    std::cout << "wrote splits train/val/test (" << split.train.frames.size() << "/"
              << split.val.frames.size() << "/" << split.test.frames.size() << " frames)\n";
  }
  return 0;
}

int cmd_train(const std::string& config_path, bool seed_given, uint64_t seed,
              const fs::path& out_dir, const std::string& train_path,
              const std::string& val_path) {
  TrainConfig cfg;
  json raw = json::object();
  if (!config_path.empty()) {
    cfg = train_config_from_json(slurp(config_path));
    raw = read_config(config_path);
  }
  if (seed_given || config_path.empty()) {
    cfg.seed = seed;
    // Keep the model's own init stream tied to the master seed unless the
    // config pins one explicitly (top-level "seed" key).
    if (!raw.contains("seed")) cfg.model.seed = mix_seed(seed, 0x30DE1);
  }
  Dataset train_set = load_dataset(train_path);
  Dataset val_set;
  if (!val_path.empty()) val_set = load_dataset(val_path);

  fs::create_directories(out_dir);
  {
    std::ofstream rc(out_dir / "train_config.json");
    rc << train_config_to_json(cfg) << "\n";
  }
  TrainResult result = train(cfg, train_set, val_set, out_dir, &std::cout);

  std::ofstream hist(out_dir / "history.csv");
  hist << "epoch,cls,spr,div,val_accuracy\n";
  for (const auto& e : result.history)
    hist << e.epoch << ',' << e.cls << ',' << e.spr << ',' << e.div << ',' << e.val_accuracy
         << '\n';
  std::cout << "final checkpoint: " << result.final_checkpoint.string() << "\n";
  if (result.best_epoch > 0)
    std::cout << "best epoch " << result.best_epoch << " (val accuracy " << result.best_val_accuracy
              << "): " << result.best_checkpoint.string() << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_path, const fs::path& out_dir,
             bool out_given) {
  auto model = Model::load_checkpoint(ckpt);
  Dataset ds = load_dataset(data_path);
  StandardEval eval = evaluate_standard(*model, ds);
  std::printf("%-8s %8s %10s\n", "domain", "frames", "accuracy");
  for (const auto& d : eval.per_domain)
    std::printf("%-8d %8d %10.4f\n", d.domain_label, d.frame_count, d.accuracy);
  std::printf("%-8s %8zu %10.4f\n", "all", ds.frames.size(), eval.accuracy);
  if (out_given) {
    fs::create_directories(out_dir);
    std::ofstream csv(out_dir / "eval.csv");
    csv << "domain,frames,accuracy\n";
    for (const auto& d : eval.per_domain)
      csv << d.domain_label << ',' << d.frame_count << ',' << d.accuracy << '\n';
    csv << "all," << ds.frames.size() << ',' << eval.accuracy << '\n';
  }
  return 0;
}

int cmd_fewshot(const std::string& ckpt, const std::string& data_path, int shots, int queries,
                int repeats, int domain, uint64_t seed, const fs::path& out_dir, bool out_given) {
  auto model = Model::load_checkpoint(ckpt);
  Dataset pool = load_dataset(data_path);
  if (domain >= 0) pool = filter_domain(pool, domain);
  FewShotProtocol protocol;
  protocol.n_shot = shots;
  protocol.n_query = queries;
  protocol.repeats = repeats;
  protocol.seed = seed;
  FewShotResult r = evaluate_fewshot(*model, pool, protocol);
  std::printf("episodes %d  n_shot %d  n_query %d  pool %zu frames\n", repeats, shots, queries,
              pool.frames.size());
  std::printf("mean accuracy %.4f  std %.4f\n", r.mean_accuracy, r.std_accuracy);
  if (out_given) {
    fs::create_directories(out_dir);
    std::ofstream csv(out_dir / "fewshot.csv");
    csv << "repeat,accuracy\n";
    for (size_t i = 0; i < r.per_repeat.size(); ++i) csv << i << ',' << r.per_repeat[i] << '\n';
  }
  return 0;
}

int cmd_explain(const std::string& ckpt, const std::string& data_path, int frame_id, int top_k,
                const std::string& format, const fs::path& out_dir) {
  auto model = Model::load_checkpoint(ckpt);
  Dataset ds = load_dataset(data_path);
  if (frame_id < 0 || frame_id >= static_cast<int>(ds.frames.size()))
    throw std::runtime_error("frame index " + std::to_string(frame_id) +
                             " out of range (dataset has " + std::to_string(ds.frames.size()) +
                             " frames)");
  const IQFrame& frame = ds.frames[frame_id];
  auto entries = explain(*model, frame, top_k);

  std::printf("frame %d  device %d  domain %d\n", frame_id, frame.device_label,
              frame.domain_label);
  std::printf("%-5s %-9s %-7s %-7s %12s %12s\n", "rank", "shapelet", "length", "t_star",
              "activation", "distance");
  for (size_t i = 0; i < entries.size(); ++i)
    std::printf("%-5zu %-9d %-7d %-7d %12.5g %12.5g\n", i + 1, entries[i].shapelet_id,
                entries[i].length, entries[i].t_star, entries[i].activation, entries[i].d_min);

  fs::create_directories(out_dir);
  const std::string stem = "explain_frame" + std::to_string(frame_id);
  if (format == "csv" || format == "both") {
    export_explanation_csv(entries, frame, frame_id, out_dir / (stem + ".csv"));
    std::cout << "wrote " << (out_dir / (stem + ".csv")).string() << "\n";
  }
  if (format == "svg" || format == "both") {
    export_explanation_svg(entries, frame, frame_id, out_dir / (stem + ".svg"));
    std::cout << "wrote " << (out_dir / (stem + ".svg")).string() << "\n";
  }
  return 0;
}

int cmd_faithfulness(const std::string& ckpt, const std::string& data_path,
                     std::vector<int> lengths, const std::string& mask, uint64_t seed,
                     const fs::path& out_dir, bool out_given) {
  auto model = Model::load_checkpoint(ckpt);
  Dataset ds = load_dataset(data_path);
  if (lengths.empty()) lengths = {8, 16, 32};
  const MaskMode mode = mask == "noise" ? MaskMode::kNoise : MaskMode::kZeros;
  if (mask != "noise" && mask != "zeros")
    throw std::runtime_error("mask mode must be 'zeros' or 'noise', got '" + mask + "'");
  auto rows = faithfulness_eval(*model, ds, lengths, seed, mode);
  std::printf("%-7s %9s %9s %9s %12s %12s\n", "length", "baseline", "guided", "random",
              "guided_drop", "random_drop");
  for (const auto& r : rows)
    std::printf("%-7d %9.4f %9.4f %9.4f %12.4f %12.4f\n", r.length, r.baseline_accuracy,
                r.guided_accuracy, r.random_accuracy, r.guided_drop(), r.random_drop());
  if (out_given) {
    fs::create_directories(out_dir);
    std::ofstream csv(out_dir / "faithfulness.csv");
    csv << "length,baseline,guided,random,guided_drop,random_drop\n";
    for (const auto& r : rows)
      csv << r.length << ',' << r.baseline_accuracy << ',' << r.guided_accuracy << ','
          << r.random_accuracy << ',' << r.guided_drop() << ',' << r.random_drop() << '\n';
  }
  return 0;
}

int cmd_gradcheck(const std::string& config_path, uint64_t seed) {
  std::optional<ModelConfig> model_cfg;
  if (!config_path.empty()) model_cfg = model_config_from_json(slurp(config_path));
  auto reports = gradcheck_all(seed, model_cfg);
  for (const auto& r : reports)
    std::printf("%-32s max rel err %.3e  (%d coords, worst %s[%d])\n", r.op.c_str(),
                r.result.max_rel_err, r.result.coords_checked,
                r.result.worst_tensor.empty() ? "-" : r.result.worst_tensor.c_str(),
                r.result.worst_index);
  const double worst = worst_rel_err(reports);
  std::printf("worst over %zu checks: %.3e\n", reports.size(), worst);
  if (worst > 1e-4) {
    std::cerr << "rfsl gradcheck: worst relative error " << worst << " exceeds 1e-4\n";
    return 2;
  }
  return 0;
}

int cmd_inspect(const std::string& ckpt, const std::string& config_path) {
  ModelConfig cfg;
  std::vector<std::pair<std::string, bool>> group_flags;  // (group, trainable) in layout order
  if (!ckpt.empty()) {
    auto model = Model::load_checkpoint(ckpt);
    cfg = model->config();
    for (const auto& g : model->groups()) group_flags.emplace_back(g.name, g.trainable);
  } else if (!config_path.empty()) {
    cfg = model_config_from_json(slurp(config_path));
  } else {
    throw std::runtime_error("inspect needs --ckpt or --config");
  }

  // The census runs off the declarative specs, so even very large configs
  // inspect instantly without allocating parameters.
  auto specs = Model::tensor_specs(cfg);
  std::printf("%-22s %-14s %12s %-22s %s\n", "tensor", "shape", "params", "group", "trainable");
  int64_t total = 0, trainable = 0;
  std::vector<std::pair<std::string, int64_t>> by_group;
  for (const auto& s : specs) {
    const bool t = cfg.freeze.is_trainable(s.group);
    const int64_t n = static_cast<int64_t>(s.shape.rows) * s.shape.cols;
    total += n;
    if (t) trainable += n;
    char shape[24];
    std::snprintf(shape, sizeof(shape), "[%d, %d]", s.shape.rows, s.shape.cols);
    std::printf("%-22s %-14s %12lld %-22s %s\n", s.name.c_str(), shape,
                static_cast<long long>(n), s.group.c_str(), t ? "yes" : "no");
    auto it = std::find_if(by_group.begin(), by_group.end(),
                           [&](const auto& p) { return p.first == s.group; });
    if (it == by_group.end())
      by_group.emplace_back(s.group, n);
    else
      it->second += n;
  }
  std::printf("\n%-22s %12s %s\n", "group", "params", "trainable");
  for (const auto& [g, n] : by_group)
    std::printf("%-22s %12lld %s\n", g.c_str(), static_cast<long long>(n),
                cfg.freeze.is_trainable(g) ? "yes" : "no");
  std::printf("\ntotal parameters      %12lld\n", static_cast<long long>(total));
  std::printf("trainable parameters  %12lld\n", static_cast<long long>(trainable));
  std::printf("trainable ratio       %12.4f%%\n",
              total > 0 ? 100.0 * static_cast<double>(trainable) / static_cast<double>(total)
                        : 0.0);
  return 0;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"interpretable RF fingerprinting: learnable I/Q shapelets over a "
               "selectively frozen transformer"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  uint64_t seed = 0;
  std::string out_dir = ".";
  app.add_option("--config", config_path, "JSON config file (schema: docs/config.md)");
  auto* seed_opt = app.add_option("--seed", seed, "master seed (default 0)");
  auto* out_opt = app.add_option("--out", out_dir, "output directory (default .)");

  auto* synth = app.add_subcommand("synth", "generate a labeled multi-domain I/Q dataset");

  auto* train = app.add_subcommand("train", "train a model on dataset splits");
  std::string train_path, val_path;
  train->add_option("--train", train_path, "training split manifest")->required();
  train->add_option("--val", val_path, "validation split manifest");

  std::string ckpt, data_path;
  auto* eval = app.add_subcommand("eval", "per-domain standard accuracy of a checkpoint");
  eval->add_option("--ckpt", ckpt, "model checkpoint")->required();
  eval->add_option("--data", data_path, "dataset manifest")->required();

  auto* fewshot = app.add_subcommand("fewshot", "episodic nearest-prototype evaluation");
  int shots = 5, queries = 30, repeats = 30, domain = -1;
  fewshot->add_option("--ckpt", ckpt, "model checkpoint")->required();
  fewshot->add_option("--data", data_path, "pool dataset manifest")->required();
  fewshot->add_option("--shots", shots, "support frames per class (default 5)");
  fewshot->add_option("--queries", queries, "query frames per class per episode (default 30)");
  fewshot->add_option("--repeats", repeats, "episodes (default 30)");
  fewshot->add_option("--domain", domain, "restrict the pool to one domain label");

  auto* explain_cmd = app.add_subcommand("explain", "top shapelet matches for one frame");
  int frame_id = 0, top_k = 3;
  std::string format = "both";
  explain_cmd->add_option("--ckpt", ckpt, "model checkpoint")->required();
  explain_cmd->add_option("--data", data_path, "dataset manifest")->required();
  explain_cmd->add_option("--frame", frame_id, "frame index (default 0)");
  explain_cmd->add_option("--top-k", top_k, "entries to report (default 3)");
  explain_cmd->add_option("--format", format, "csv | svg | both (default both)")
      ->check(CLI::IsMember({"csv", "svg", "both"}));

  auto* faith = app.add_subcommand("faithfulness", "guided vs random masking accuracy drops");
  std::vector<int> lengths;
  std::string mask = "zeros";
  faith->add_option("--ckpt", ckpt, "model checkpoint")->required();
  faith->add_option("--data", data_path, "dataset manifest")->required();
  faith->add_option("--lengths", lengths, "mask lengths (default 8 16 32)");
  faith->add_option("--mask", mask, "zeros | noise (default zeros)");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every op");

  auto* inspect = app.add_subcommand("inspect", "parameter census of a checkpoint or config");
  inspect->add_option("--ckpt", ckpt, "model checkpoint");

  CLI11_PARSE(app, argc, argv);
  CLI::App* sub = app.get_subcommands().front();

  try {
    const bool out_given = out_opt->count() > 0;
    if (sub == synth) return cmd_synth(read_config(config_path), seed, out_dir);
    if (sub == train)
      return cmd_train(config_path, seed_opt->count() > 0, seed, out_dir, train_path, val_path);
    if (sub == eval) return cmd_eval(ckpt, data_path, out_dir, out_given);
    if (sub == fewshot)
      return cmd_fewshot(ckpt, data_path, shots, queries, repeats, domain, seed, out_dir,
                         out_given);
    if (sub == explain_cmd)
      return cmd_explain(ckpt, data_path, frame_id, top_k, format, out_dir);
    if (sub == faith)
      return cmd_faithfulness(ckpt, data_path, lengths, mask, seed, out_dir, out_given);
    if (sub == gradcheck) return cmd_gradcheck(config_path, seed);
    if (sub == inspect) return cmd_inspect(ckpt, config_path);
  } catch (const std::exception& e) {
    std::cerr << "rfsl " << sub->get_name() << ": " << one_line(e.what()) << "\n";
    return 1;
  }
  return 0;
}
