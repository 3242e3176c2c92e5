#include "rfsl/model.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "rfsl/rng.hpp"

namespace rfsl {

namespace {

using nlohmann::json;

constexpr char kCheckpointMagic[8] = {'R', 'F', 'S', 'L', 'C', 'K', 'P', '1'};
constexpr char kWeightMagic[8] = {'R', 'F', 'S', 'L', 'W', 'T', '0', '1'};
constexpr uint32_t kCheckpointVersion = 1;
constexpr uint32_t kWeightVersion = 1;

// Group order is part of the checkpoint layout and the optimizer state
// layout; keep it stable.
const char* kGroupOrder[] = {"embedder",      "positional_embeddings", "layer_norms",
                             "attention_weights", "ffn_weights",       "shapelet_bank",
                             "local_projection",  "output_head"};

void write_bytes(std::ofstream& out, const void* p, size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}
void write_u32(std::ofstream& out, uint32_t v) { write_bytes(out, &v, sizeof(v)); }
void write_u64(std::ofstream& out, uint64_t v) { write_bytes(out, &v, sizeof(v)); }
void write_i32(std::ofstream& out, int32_t v) { write_bytes(out, &v, sizeof(v)); }
void write_string(std::ofstream& out, const std::string& s) {
  write_u64(out, s.size());
  write_bytes(out, s.data(), s.size());
}

void read_bytes(std::ifstream& in, void* p, size_t n, const char* what) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in.gcount()) != n)
    throw std::runtime_error(std::string("checkpoint truncated while reading ") + what);
}
uint32_t read_u32(std::ifstream& in, const char* what) {
  uint32_t v;
  read_bytes(in, &v, sizeof(v), what);
  return v;
}
uint64_t read_u64(std::ifstream& in, const char* what) {
  uint64_t v;
  read_bytes(in, &v, sizeof(v), what);
  return v;
}
int32_t read_i32(std::ifstream& in, const char* what) {
  int32_t v;
  read_bytes(in, &v, sizeof(v), what);
  return v;
}
std::string read_string(std::ifstream& in, const char* what) {
  const uint64_t n = read_u64(in, what);
  if (n > (1ull << 30)) throw std::runtime_error("checkpoint: implausible string length");
  std::string s(n, '\0');
  read_bytes(in, s.data(), n, what);
  return s;
}

}  // namespace

std::string model_config_to_json(const ModelConfig& cfg) {
  json j;
  j["frame_length"] = cfg.frame_length;
  j["class_count"] = cfg.class_count;
  j["d_l"] = cfg.d_l;
  j["seed"] = cfg.seed;
  j["pooling"] = cfg.pooling;
  j["embedder"] = {{"kernel_size", cfg.embedder.kernel_size},
                   {"layer_count", cfg.embedder.layer_count},
                   {"stride", cfg.embedder.stride},
                   {"hidden_channels", cfg.embedder.hidden_channels}};
  j["backbone"] = {{"layer_count", cfg.backbone.layer_count},
                   {"d_h", cfg.backbone.d_h},
                   {"head_count", cfg.backbone.head_count},
                   {"ff_width", cfg.backbone.ff_width},
                   {"max_seq", cfg.backbone.max_seq}};
  json groups = json::array();
  for (const auto& g : cfg.shapelets.groups) groups.push_back({g.count, g.length});
  j["shapelets"] = {{"groups", groups}, {"length_normalize", cfg.shapelets.length_normalize}};
  j["trainable_groups"] = cfg.freeze.trainable_groups;
  return j.dump(2);
}

ModelConfig model_config_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("model config parse error: ") + e.what());
  }
  ModelConfig def;
  ModelConfig cfg;
  cfg.frame_length = j.value("frame_length", def.frame_length);
  cfg.class_count = j.value("class_count", def.class_count);
  cfg.d_l = j.value("d_l", def.d_l);
  cfg.seed = j.value("seed", def.seed);
  cfg.pooling = j.value("pooling", def.pooling);
  if (j.contains("embedder")) {
    const auto& e = j["embedder"];
    cfg.embedder.kernel_size = e.value("kernel_size", def.embedder.kernel_size);
    cfg.embedder.layer_count = e.value("layer_count", def.embedder.layer_count);
    cfg.embedder.stride = e.value("stride", def.embedder.stride);
    cfg.embedder.hidden_channels = e.value("hidden_channels", def.embedder.hidden_channels);
  }
  if (j.contains("backbone")) {
    const auto& b = j["backbone"];
    cfg.backbone.layer_count = b.value("layer_count", def.backbone.layer_count);
    cfg.backbone.d_h = b.value("d_h", def.backbone.d_h);
    cfg.backbone.head_count = b.value("head_count", def.backbone.head_count);
    cfg.backbone.ff_width = b.value("ff_width", def.backbone.ff_width);
    cfg.backbone.max_seq = b.value("max_seq", def.backbone.max_seq);
  }
  if (j.contains("shapelets")) {
    const auto& s = j["shapelets"];
    if (s.contains("groups")) {
      cfg.shapelets.groups.clear();
      for (const auto& g : s["groups"])
        cfg.shapelets.groups.push_back({g.at(0).get<int>(), g.at(1).get<int>()});
    }
    cfg.shapelets.length_normalize = s.value("length_normalize", def.shapelets.length_normalize);
  }
  if (j.contains("trainable_groups"))
    cfg.freeze.trainable_groups = j["trainable_groups"].get<std::vector<std::string>>();
  return cfg;
}

std::vector<TensorSpec> Model::tensor_specs(const ModelConfig& cfg) {
  if (cfg.class_count < 2) throw std::invalid_argument("model: needs at least 2 classes");
  if (cfg.d_l < 1) throw std::invalid_argument("model: d_l must be positive");
  if (cfg.pooling != "mean")
    throw std::invalid_argument("model: only mean pooling is implemented, got '" + cfg.pooling + "'");
  const int K = cfg.shapelets.total_count();
  if (K < 2) throw std::invalid_argument("model: diversity loss needs at least 2 shapelets");
  for (int L : shapelet_lengths(cfg.shapelets))
    if (L > cfg.frame_length)
      throw std::invalid_argument("model: shapelet longer than the frame");

  std::vector<TensorSpec> specs;
  embedder_tensor_specs(cfg.embedder, cfg.backbone.d_h, specs);
  backbone_tensor_specs(cfg.backbone, specs);
  shapelet_tensor_specs(cfg.shapelets, specs);
  specs.push_back({"local_proj.w", {K, cfg.d_l}, "local_projection", InitKind::kGaussian,
                   1.0 / std::sqrt(static_cast<double>(K))});
  specs.push_back({"local_proj.b", {1, cfg.d_l}, "local_projection", InitKind::kZero, 0.0});
  const int dz = cfg.backbone.d_h + cfg.d_l;
  specs.push_back({"head.w", {dz, cfg.class_count}, "output_head", InitKind::kGaussian,
                   1.0 / std::sqrt(static_cast<double>(dz))});
  specs.push_back({"head.b", {1, cfg.class_count}, "output_head", InitKind::kZero, 0.0});
  return specs;
}

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
  const int l_seq = embedder_output_length(cfg_.embedder, cfg_.frame_length);
  if (l_seq < 1) throw std::invalid_argument("model: embedder collapses the sequence");
  if (l_seq > cfg_.backbone.max_seq)
    throw std::invalid_argument("model: l_seq exceeds backbone max_seq");

  const auto specs = tensor_specs(cfg_);
  tensors_.reserve(specs.size());
  for (size_t i = 0; i < specs.size(); ++i) {
    const TensorSpec& s = specs[i];
    Tensor t(s.name, s.shape);
    switch (s.init) {
      case InitKind::kZero:
        break;
      case InitKind::kOne:
        std::fill(t.value.begin(), t.value.end(), 1.0);
        break;
      case InitKind::kGaussian: {
        auto rng = make_rng(mix_seed(cfg_.seed, static_cast<uint64_t>(i)));
        fill_gaussian(t.value, rng, s.stddev);
        break;
      }
    }
    index_[s.name] = tensors_.size();
    tensors_.push_back(std::move(t));
  }

  for (const char* gname : kGroupOrder) {
    ParameterGroup g;
    g.name = gname;
    g.trainable = cfg_.freeze.is_trainable(gname);
    for (size_t i = 0; i < specs.size(); ++i)
      if (specs[i].group == gname) g.tensors.push_back(&tensors_[i]);
    if (g.tensors.empty()) throw std::logic_error("model: empty parameter group " + g.name);
    groups_.push_back(std::move(g));
  }
}

int Model::sequence_length() const {
  return embedder_output_length(cfg_.embedder, cfg_.frame_length);
}

Tensor& Model::tensor(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("model: no tensor named " + name);
  return tensors_[it->second];
}

const Tensor& Model::tensor(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("model: no tensor named " + name);
  return tensors_[it->second];
}

std::vector<const Tensor*> Model::shapelet_tensors() const {
  std::vector<const Tensor*> out;
  const int K = cfg_.shapelets.total_count();
  out.reserve(static_cast<size_t>(K));
  for (int k = 0; k < K; ++k) out.push_back(&tensor("shapelet." + std::to_string(k)));
  return out;
}

void Model::init_shapelets_from_data(const Dataset& train, uint64_t seed) {
  if (train.frame_length != cfg_.frame_length)
    throw std::invalid_argument("init_shapelets_from_data: frame length mismatch");
  auto bank = init_bank(cfg_.shapelets, train, seed);
  for (size_t k = 0; k < bank.size(); ++k)
    tensor("shapelet." + std::to_string(k)).value = std::move(bank[k]);
}

Model::Nodes Model::bind(Tape& tape) {
  Nodes n;
  for (int l = 0; l < cfg_.embedder.layer_count; ++l) {
    const std::string base = "embedder.conv" + std::to_string(l);
    n.embedder_params.push_back(tape.param(tensor(base + ".w")));
    n.embedder_params.push_back(tape.param(tensor(base + ".b")));
  }
  n.backbone.pos = tape.param(tensor("backbone.pos"));
  for (int l = 0; l < cfg_.backbone.layer_count; ++l) {
    const std::string base = "backbone.block" + std::to_string(l);
    BlockNodes b;
    b.ln1_g = tape.param(tensor(base + ".ln1.gamma"));
    b.ln1_b = tape.param(tensor(base + ".ln1.beta"));
    b.wq = tape.param(tensor(base + ".attn.wq"));
    b.bq = tape.param(tensor(base + ".attn.bq"));
    b.wk = tape.param(tensor(base + ".attn.wk"));
    b.bk = tape.param(tensor(base + ".attn.bk"));
    b.wv = tape.param(tensor(base + ".attn.wv"));
    b.bv = tape.param(tensor(base + ".attn.bv"));
    b.wo = tape.param(tensor(base + ".attn.wo"));
    b.bo = tape.param(tensor(base + ".attn.bo"));
    b.ln2_g = tape.param(tensor(base + ".ln2.gamma"));
    b.ln2_b = tape.param(tensor(base + ".ln2.beta"));
    b.ff_w1 = tape.param(tensor(base + ".ffn.w1"));
    b.ff_b1 = tape.param(tensor(base + ".ffn.b1"));
    b.ff_w2 = tape.param(tensor(base + ".ffn.w2"));
    b.ff_b2 = tape.param(tensor(base + ".ffn.b2"));
    n.backbone.blocks.push_back(b);
  }
  n.backbone.lnf_g = tape.param(tensor("backbone.ln_f.gamma"));
  n.backbone.lnf_b = tape.param(tensor("backbone.ln_f.beta"));
  const int K = cfg_.shapelets.total_count();
  for (int k = 0; k < K; ++k)
    n.shapelets.push_back(tape.param(tensor("shapelet." + std::to_string(k))));
  n.lp_w = tape.param(tensor("local_proj.w"));
  n.lp_b = tape.param(tensor("local_proj.b"));
  n.head_w = tape.param(tensor("head.w"));
  n.head_b = tape.param(tensor("head.b"));
  return n;
}

Model::Forward Model::forward_joint(Tape& tape, const Nodes& nodes, const IQFrame& frame) const {
  if (frame.frame_length != cfg_.frame_length)
    throw std::invalid_argument("forward: frame length does not match model config");

  Value tokens = embed_frame(tape, cfg_.embedder, nodes.embedder_params, frame);
  Value zg = encode_tokens(tape, cfg_.backbone, nodes.backbone, tokens);

  std::vector<double> fr(frame.samples.begin(), frame.samples.end());
  Value frame_node = tape.input({2, cfg_.frame_length}, fr);
  Value a = activation_row(tape, frame_node, nodes.shapelets, cfg_.shapelets);
  Value zl = tape.linear(a, nodes.lp_w, nodes.lp_b);

  Forward f;
  f.activ = a;
  f.z = tape.concat_cols(std::vector<Value>{zg, zl});
  f.logits = tape.linear(f.z, nodes.head_w, nodes.head_b);
  return f;
}

Model::BatchForward Model::forward_batch(Tape& tape, const Nodes& nodes,
                                         std::span<const IQFrame* const> frames) const {
  if (frames.empty()) throw std::invalid_argument("forward_batch: empty batch");
  std::vector<Value> logit_rows, activ_rows;
  logit_rows.reserve(frames.size());
  activ_rows.reserve(frames.size());
  for (const IQFrame* f : frames) {
    Forward fw = forward_joint(tape, nodes, *f);
    logit_rows.push_back(fw.logits);
    activ_rows.push_back(fw.activ);
  }
  return {tape.stack_rows(logit_rows), tape.stack_rows(activ_rows)};
}

std::vector<double> Model::logits_for(const IQFrame& frame) {
  Tape tape(false);
  Nodes nodes = bind(tape);
  return tape.value(forward_joint(tape, nodes, frame).logits);
}

std::vector<double> Model::joint_representation(const IQFrame& frame) {
  Tape tape(false);
  Nodes nodes = bind(tape);
  return tape.value(forward_joint(tape, nodes, frame).z);
}

namespace {

std::vector<std::vector<double>> chunked_forward(
    Model& model, std::span<const IQFrame* const> frames, int chunk,
    Value Model::Forward::*field) {
  if (chunk < 1) throw std::invalid_argument("batch forward: chunk must be positive");
  std::vector<std::vector<double>> out;
  out.reserve(frames.size());
  for (size_t begin = 0; begin < frames.size(); begin += static_cast<size_t>(chunk)) {
    Tape tape(false);
    Model::Nodes nodes = model.bind(tape);
    const size_t end = std::min(frames.size(), begin + static_cast<size_t>(chunk));
    for (size_t i = begin; i < end; ++i) {
      Model::Forward fw = model.forward_joint(tape, nodes, *frames[i]);
      out.push_back(tape.value(fw.*field));
    }
  }
  return out;
}

}  // namespace

std::vector<std::vector<double>> Model::batch_logits(std::span<const IQFrame* const> frames,
                                                     int chunk) {
  return chunked_forward(*this, frames, chunk, &Forward::logits);
}

std::vector<std::vector<double>> Model::batch_joint(std::span<const IQFrame* const> frames,
                                                    int chunk) {
  return chunked_forward(*this, frames, chunk, &Forward::z);
}

std::vector<double> Model::activation_values(const IQFrame& frame) const {
  auto bank = shapelet_tensors();
  return activations(frame, bank, cfg_.shapelets.length_normalize);
}

void Model::save_checkpoint(const std::filesystem::path& path,
                            const std::string& metadata_json) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  write_bytes(out, kCheckpointMagic, sizeof(kCheckpointMagic));
  write_u32(out, kCheckpointVersion);
  write_string(out, model_config_to_json(cfg_));
  write_string(out, metadata_json);
  write_u64(out, groups_.size());
  for (const auto& g : groups_) {
    write_string(out, g.name);
    const uint8_t flag = g.trainable ? 1 : 0;
    write_bytes(out, &flag, 1);
    write_u64(out, g.tensors.size());
    for (const Tensor* t : g.tensors) {
      write_string(out, t->name);
      write_i32(out, t->shape.rows);
      write_i32(out, t->shape.cols);
      write_bytes(out, t->value.data(), t->value.size() * sizeof(double));
    }
  }
  out.flush();
  if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

std::unique_ptr<Model> Model::load_checkpoint(const std::filesystem::path& path,
                                              std::string* metadata_json) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  char magic[8];
  read_bytes(in, magic, sizeof(magic), "magic");
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error("checkpoint: bad magic header");
  const uint32_t version = read_u32(in, "version");
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const std::string cfg_json = read_string(in, "config");
  const std::string meta = read_string(in, "metadata");
  if (metadata_json) *metadata_json = meta;

  auto model = std::make_unique<Model>(model_config_from_json(cfg_json));
  size_t filled = 0;
  const uint64_t ngroups = read_u64(in, "group count");
  for (uint64_t gi = 0; gi < ngroups; ++gi) {
    const std::string gname = read_string(in, "group name");
    uint8_t flag;
    read_bytes(in, &flag, 1, "trainable flag");
    bool found = false;
    for (auto& g : model->groups_)
      if (g.name == gname) {
        g.trainable = flag != 0;
        found = true;
      }
    if (!found) throw std::runtime_error("checkpoint: unknown parameter group " + gname);
    const uint64_t ntensors = read_u64(in, "tensor count");
    for (uint64_t ti = 0; ti < ntensors; ++ti) {
      const std::string name = read_string(in, "tensor name");
      const int rows = read_i32(in, "tensor rows");
      const int cols = read_i32(in, "tensor cols");
      Tensor& t = model->tensor(name);
      if (t.shape.rows != rows || t.shape.cols != cols)
        throw std::runtime_error("checkpoint: shape mismatch for tensor " + name);
      read_bytes(in, t.value.data(), t.value.size() * sizeof(double), "tensor data");
      ++filled;
    }
  }
  if (filled != model->tensors_.size())
    throw std::runtime_error("checkpoint: tensor count mismatch (file holds " +
                             std::to_string(filled) + ", model needs " +
                             std::to_string(model->tensors_.size()) + ")");
  return model;
}

void Model::import_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open weight file: " + path.string());
  char magic[8];
  read_bytes(in, magic, sizeof(magic), "magic");
  if (std::memcmp(magic, kWeightMagic, sizeof(magic)) != 0)
    throw std::runtime_error("weight file: bad magic header");
  const uint32_t version = read_u32(in, "version");
  if (version != kWeightVersion)
    throw std::runtime_error("weight file: unsupported version " + std::to_string(version));
  const uint64_t count = read_u64(in, "tensor count");
  for (uint64_t i = 0; i < count; ++i) {
    const std::string name = read_string(in, "tensor name");
    const int rows = read_i32(in, "tensor rows");
    const int cols = read_i32(in, "tensor cols");
    Tensor& t = tensor(name);
    if (t.shape.rows != rows || t.shape.cols != cols)
      throw std::runtime_error("weight file: shape mismatch for tensor " + name);
    read_bytes(in, t.value.data(), t.value.size() * sizeof(double), "tensor data");
  }
}

void write_weight_file(const std::filesystem::path& path,
                       std::span<const Tensor* const> tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open weight file for writing: " + path.string());
  write_bytes(out, kWeightMagic, sizeof(kWeightMagic));
  write_u32(out, kWeightVersion);
  write_u64(out, tensors.size());
  for (const Tensor* t : tensors) {
    write_string(out, t->name);
    write_i32(out, t->shape.rows);
    write_i32(out, t->shape.cols);
    write_bytes(out, t->value.data(), t->value.size() * sizeof(double));
  }
  out.flush();
  if (!out) throw std::runtime_error("weight file write failed: " + path.string());
}

double trainable_ratio(std::span<const ParameterGroup> groups) {
  int64_t total = 0, trainable = 0;
  for (const auto& g : groups)
    for (const Tensor* t : g.tensors) {
      total += t->size();
      if (g.trainable) trainable += t->size();
    }
  if (total == 0) return 0.0;
  return static_cast<double>(trainable) / static_cast<double>(total);
}

int64_t total_param_count(const ModelConfig& cfg) {
  int64_t n = 0;
  for (const auto& s : Model::tensor_specs(cfg)) n += s.shape.size();
  return n;
}

int64_t trainable_param_count(const ModelConfig& cfg) {
  int64_t n = 0;
  for (const auto& s : Model::tensor_specs(cfg))
    if (cfg.freeze.is_trainable(s.group)) n += s.shape.size();
  return n;
}

}  // namespace rfsl
