#include "rfsl/signal.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "rfsl/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "payload I/O assumes a little-endian host");

namespace rfsl {

namespace {

constexpr char kManifestMagic[] = "RFSL-MANIFEST 1";
constexpr char kPayloadMagic[8] = {'R', 'F', 'S', 'L', 'I', 'Q', '0', '1'};

void validate_dataset(const Dataset& d) {
  for (const auto& f : d.frames) {
    if (f.frame_length != d.frame_length)
      throw std::invalid_argument("dataset: inconsistent frame lengths");
    if (f.device_label < 0 || f.device_label >= d.class_count)
      throw std::invalid_argument("dataset: device label out of range");
    if (static_cast<int>(f.samples.size()) != 2 * f.frame_length)
      throw std::invalid_argument("dataset: frame sample count does not match frame length");
    for (float v : f.samples)
      if (!std::isfinite(v)) throw std::invalid_argument("dataset: non-finite sample");
  }
}

}  // namespace

std::vector<int> Dataset::domain_labels() const {
  std::set<int> s;
  for (const auto& f : frames) s.insert(f.domain_label);
  return {s.begin(), s.end()};
}

std::map<std::pair<int, int>, int64_t> Dataset::cell_counts() const {
  std::map<std::pair<int, int>, int64_t> m;
  for (const auto& f : frames) ++m[{f.device_label, f.domain_label}];
  return m;
}

DatasetManifest manifest_for(const Dataset& dataset, std::string payload_path) {
  DatasetManifest m;
  m.frame_length = dataset.frame_length;
  m.class_count = dataset.class_count;
  m.domains = dataset.domain_labels();
  m.counts = dataset.cell_counts();
  m.payload_path = std::move(payload_path);
  return m;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& manifest_path,
                  const std::filesystem::path& payload_path) {
  validate_dataset(dataset);

  // Canonical grouping: stable sort by (class, domain) so labels are
  // recoverable from the per-cell count table alone.
  std::vector<const IQFrame*> order;
  order.reserve(dataset.frames.size());
  for (const auto& f : dataset.frames) order.push_back(&f);
  std::stable_sort(order.begin(), order.end(), [](const IQFrame* a, const IQFrame* b) {
    return std::make_pair(a->device_label, a->domain_label) <
           std::make_pair(b->device_label, b->domain_label);
  });

  std::ofstream payload(payload_path, std::ios::binary | std::ios::trunc);
  if (!payload) throw std::runtime_error("cannot open payload for writing: " + payload_path.string());
  payload.write(kPayloadMagic, sizeof(kPayloadMagic));
  for (const IQFrame* f : order)
    payload.write(reinterpret_cast<const char*>(f->samples.data()),
                  static_cast<std::streamsize>(f->samples.size() * sizeof(float)));
  payload.flush();
  if (!payload) throw std::runtime_error("payload write failed: " + payload_path.string());

  DatasetManifest m = manifest_for(dataset, std::filesystem::path(payload_path).filename().string());
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open manifest for writing: " + manifest_path.string());
  out << kManifestMagic << "\n";
  out << "frame_length " << m.frame_length << "\n";
  out << "class_count " << m.class_count << "\n";
  out << "domains";
  for (int d : m.domains) out << ' ' << d;
  out << "\n";
  out << "payload " << m.payload_path << "\n";
  out << "encoding " << m.encoding << "\n";
  out << "cells " << m.counts.size() << "\n";
  for (const auto& [cell, n] : m.counts)
    out << "cell " << cell.first << ' ' << cell.second << ' ' << n << "\n";
  out << "end\n";
  out.flush();
  if (!out) throw std::runtime_error("manifest write failed: " + manifest_path.string());
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("cannot open manifest: " + manifest_path.string());
  std::string line;
  if (!std::getline(in, line) || line != kManifestMagic)
    throw std::runtime_error("manifest: bad or missing magic header");

  DatasetManifest m;
  size_t declared_cells = 0;
  bool saw_end = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "frame_length") {
      ls >> m.frame_length;
    } else if (key == "class_count") {
      ls >> m.class_count;
    } else if (key == "domains") {
      int d;
      while (ls >> d) m.domains.push_back(d);
    } else if (key == "payload") {
      ls >> m.payload_path;
    } else if (key == "encoding") {
      std::getline(ls, m.encoding);
      if (!m.encoding.empty() && m.encoding.front() == ' ') m.encoding.erase(0, 1);
    } else if (key == "cells") {
      ls >> declared_cells;
    } else if (key == "cell") {
      int c, d;
      int64_t n;
      if (!(ls >> c >> d >> n)) throw std::runtime_error("manifest: malformed cell line");
      m.counts[{c, d}] = n;
    } else if (key == "end") {
      saw_end = true;
      break;
    } else {
      throw std::runtime_error("manifest: unknown key '" + key + "'");
    }
  }
  if (!saw_end) throw std::runtime_error("manifest: truncated (no end marker)");
  if (m.counts.size() != declared_cells)
    throw std::runtime_error("manifest: cell count does not match declared table size");
  if (m.frame_length <= 0 || m.class_count <= 0)
    throw std::runtime_error("manifest: frame_length and class_count must be positive");
  if (m.encoding != DatasetManifest{}.encoding)
    throw std::runtime_error("manifest: unsupported encoding '" + m.encoding + "'");
  int64_t total = 0;
  for (const auto& [cell, n] : m.counts) {
    if (cell.first < 0 || cell.first >= m.class_count)
      throw std::runtime_error("manifest: cell class index out of range");
    if (n < 0) throw std::runtime_error("manifest: negative cell count");
    total += n;
  }

  std::filesystem::path payload_path = m.payload_path;
  if (payload_path.is_relative()) payload_path = manifest_path.parent_path() / payload_path;
  std::ifstream payload(payload_path, std::ios::binary);
  if (!payload) throw std::runtime_error("cannot open payload: " + payload_path.string());
  char magic[8];
  payload.read(magic, sizeof(magic));
  if (payload.gcount() != sizeof(magic) || std::memcmp(magic, kPayloadMagic, sizeof(magic)) != 0)
    throw std::runtime_error("payload: bad or missing magic header");
  payload.seekg(0, std::ios::end);
  const int64_t body = static_cast<int64_t>(payload.tellg()) - static_cast<int64_t>(sizeof(magic));
  const int64_t expected = total * 2 * m.frame_length * static_cast<int64_t>(sizeof(float));
  if (body != expected)
    throw std::runtime_error("payload size mismatch: manifest declares " + std::to_string(total) +
                             " frames (" + std::to_string(expected) + " bytes), payload holds " +
                             std::to_string(body) + " bytes");
  payload.seekg(sizeof(magic), std::ios::beg);

  Dataset ds;
  ds.frame_length = m.frame_length;
  ds.class_count = m.class_count;
  ds.frames.reserve(static_cast<size_t>(total));
  for (const auto& [cell, n] : m.counts) {
    for (int64_t i = 0; i < n; ++i) {
      IQFrame f;
      f.frame_length = m.frame_length;
      f.device_label = cell.first;
      f.domain_label = cell.second;
      f.samples.resize(static_cast<size_t>(2) * m.frame_length);
      payload.read(reinterpret_cast<char*>(f.samples.data()),
                   static_cast<std::streamsize>(f.samples.size() * sizeof(float)));
      if (!payload) throw std::runtime_error("payload: short read");
      for (float v : f.samples)
        if (!std::isfinite(v)) throw std::runtime_error("payload: non-finite sample detected");
      ds.frames.push_back(std::move(f));
    }
  }
  return ds;
}

IQFrame normalize_frame(const IQFrame& frame, NormalizeMode mode) {
  if (mode == NormalizeMode::kNone) return frame;
  double ss = 0.0;
  for (float v : frame.samples) ss += static_cast<double>(v) * v;
  const double rms = std::sqrt(ss / static_cast<double>(frame.samples.size()));
  if (!(rms > 0.0)) throw std::domain_error("normalize_frame: zero-energy frame");
  IQFrame out = frame;
  for (float& v : out.samples) v = static_cast<float>(v / rms);
  return out;
}

IQFrame downsample(const IQFrame& frame, int target_T) {
  if (target_T <= 0) throw std::invalid_argument("downsample: target length must be positive");
  if (frame.frame_length < target_T)
    throw std::invalid_argument("downsample: frame shorter than target length");
  const int block = frame.frame_length / target_T;
  if (block == 1 && frame.frame_length == target_T) return frame;
  IQFrame out;
  out.frame_length = target_T;
  out.device_label = frame.device_label;
  out.domain_label = frame.domain_label;
  out.samples.resize(static_cast<size_t>(2) * target_T);
  for (int row = 0; row < 2; ++row) {
    const float* src = frame.samples.data() + static_cast<size_t>(row) * frame.frame_length;
    float* dst = out.samples.data() + static_cast<size_t>(row) * target_T;
    for (int n = 0; n < target_T; ++n) {
      double s = 0.0;
      for (int j = 0; j < block; ++j) s += src[n * block + j];
      dst[n] = static_cast<float>(s / block);
    }
  }
  return out;
}

DatasetSplit split_dataset(const Dataset& dataset, SplitRatios ratios, uint64_t seed) {
  const double rs[3] = {ratios.train, ratios.val, ratios.test};
  double sum = 0.0;
  for (double r : rs) {
    if (r < 0.0 || !std::isfinite(r)) throw std::invalid_argument("split: ratios must be >= 0");
    sum += r;
  }
  if (std::fabs(sum - 1.0) > 1e-9) throw std::invalid_argument("split: ratios must sum to 1");
  int active = 0;
  for (double r : rs)
    if (r > 0.0) ++active;

  // Gather per-cell frame indices in canonical order.
  std::map<std::pair<int, int>, std::vector<size_t>> cells;
  for (size_t i = 0; i < dataset.frames.size(); ++i) {
    const auto& f = dataset.frames[i];
    cells[{f.device_label, f.domain_label}].push_back(i);
  }

  DatasetSplit out;
  for (Dataset* part : {&out.train, &out.val, &out.test}) {
    part->frame_length = dataset.frame_length;
    part->class_count = dataset.class_count;
  }
  for (auto& [cell, idx] : cells) {
    const int n = static_cast<int>(idx.size());
    if (n < active)
      throw std::invalid_argument("split: cell (" + std::to_string(cell.first) + "," +
                                  std::to_string(cell.second) + ") has fewer frames than partitions");
    auto rng = make_rng(mix_seed(seed, static_cast<uint64_t>(cell.first),
                                 static_cast<uint64_t>(cell.second)));
    std::shuffle(idx.begin(), idx.end(), rng);

    // Largest-remainder allocation; ties resolved toward the earlier partition.
    int take[3];
    double frac[3];
    int assigned = 0;
    for (int p = 0; p < 3; ++p) {
      const double share = rs[p] * n;
      take[p] = static_cast<int>(std::floor(share));
      frac[p] = share - take[p];
      assigned += take[p];
    }
    for (int extra = n - assigned; extra > 0; --extra) {
      int best = 0;
      for (int p = 1; p < 3; ++p)
        if (frac[p] > frac[best]) best = p;
      ++take[best];
      frac[best] = -1.0;
    }

    Dataset* parts[3] = {&out.train, &out.val, &out.test};
    size_t pos = 0;
    for (int p = 0; p < 3; ++p) {
      std::vector<size_t> chosen(idx.begin() + pos, idx.begin() + pos + take[p]);
      pos += take[p];
      std::sort(chosen.begin(), chosen.end());  // keep within-cell order stable
      for (size_t i : chosen) parts[p]->frames.push_back(dataset.frames[i]);
    }
  }
  return out;
}

}  // namespace rfsl
