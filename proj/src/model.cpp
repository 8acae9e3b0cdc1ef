#include "clbench/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "clbench/errors.hpp"

namespace clbench {

static_assert(std::numeric_limits<double>::is_iec559, "IEEE-754 doubles required");

LogitMask::LogitMask(std::vector<int> labels) : labels_(std::move(labels)) {
  std::sort(labels_.begin(), labels_.end());
  labels_.erase(std::unique(labels_.begin(), labels_.end()), labels_.end());
  if (labels_.empty()) throw ProtocolViolation("logit mask must not be empty");
  if (labels_.front() < 0)
    throw ProtocolViolation("logit mask contains negative label " +
                            std::to_string(labels_.front()));
}

bool LogitMask::contains(int label) const {
  return std::binary_search(labels_.begin(), labels_.end(), label);
}

void LogitMask::require_within(std::size_t class_count, const char* context) const {
  if (labels_.back() >= static_cast<int>(class_count))
    throw ProtocolViolation(std::string(context) + ": mask label " +
                            std::to_string(labels_.back()) + " outside class range [0," +
                            std::to_string(class_count) + ")");
}

bool LogitMask::is_subset_of(const LogitMask& other) const {
  return std::includes(other.labels_.begin(), other.labels_.end(), labels_.begin(),
                       labels_.end());
}

void ModelConfig::validate() const {
  if (feature_dim == 0 || head_hidden == 0)
    throw ConfigError("model: feature_dim and head_hidden must be > 0");
  if (in_channels == 0 || in_h == 0 || in_w == 0)
    throw ConfigError("model: input shape must be positive");
  for (std::size_t f : conv_filters) {
    if (f == 0) throw ConfigError("model: conv filter count must be > 0");
  }
  const std::size_t stages = conv_filters.size();
  if ((in_h % (std::size_t{1} << stages)) != 0 || (in_w % (std::size_t{1} << stages)) != 0)
    throw ConfigError("model: input " + std::to_string(in_h) + "x" + std::to_string(in_w) +
                      " not divisible by 2^" + std::to_string(stages) + " pooling stages");
}

std::size_t ModelConfig::flat_dim() const {
  const std::size_t ch = conv_filters.empty() ? in_channels : conv_filters.back();
  return ch * pooled_h() * pooled_w();
}

Model build_model(const ModelConfig& cfg) {
  cfg.validate();
  RngStream init = seed_rng(cfg.seed, "init");
  Model m{cfg,
          {},
          Tensor{},
          Tensor{},
          Tensor{},
          Tensor{},
          std::nullopt,
          std::nullopt,
          {},
          seed_rng(cfg.seed, "head")};

  std::size_t ch = cfg.in_channels;
  for (std::size_t f : cfg.conv_filters) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(ch * 3 * 3));
    m.conv_kernels.push_back(Tensor::uniform({f, ch, 3, 3}, bound, init));
    ch = f;
  }
  const std::size_t flat = cfg.flat_dim();
  m.fc_w = Tensor::uniform({flat, cfg.feature_dim}, 1.0 / std::sqrt(static_cast<double>(flat)),
                           init);
  m.fc_b = Tensor::zeros({cfg.feature_dim});
  m.head1_w = Tensor::uniform({cfg.feature_dim, cfg.head_hidden},
                              1.0 / std::sqrt(static_cast<double>(cfg.feature_dim)), init);
  m.head1_b = Tensor::zeros({cfg.head_hidden});
  return m;
}

void grow_head(Model& m, const std::vector<int>& new_labels, int task_id) {
  const std::size_t k = m.class_count();
  if (new_labels.empty()) throw ProtocolViolation("grow_head: empty label list");
  for (std::size_t i = 0; i < new_labels.size(); ++i) {
    const int label = new_labels[i];
    if (label >= 0 && static_cast<std::size_t>(label) < k)
      throw ProtocolViolation("grow_head: label " + std::to_string(label) +
                              " overlaps existing class range [0," + std::to_string(k) + ")");
    if (label != static_cast<int>(k + i))
      throw ProtocolViolation("grow_head: labels must extend the class range contiguously; got " +
                              std::to_string(label) + " where " + std::to_string(k + i) +
                              " was expected");
  }

  const std::size_t hidden = m.cfg.head_hidden;
  const std::size_t grown = k + new_labels.size();
  Tensor w = Tensor::zeros({grown, hidden});
  Tensor b = Tensor::zeros({grown});
  if (m.head2_w) {
    std::copy(m.head2_w->data.begin(), m.head2_w->data.end(), w.data.begin());
    std::copy(m.head2_b->data.begin(), m.head2_b->data.end(), b.data.begin());
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (std::size_t row = k; row < grown; ++row) {
    for (std::size_t j = 0; j < hidden; ++j)
      w.data[row * hidden + j] = (2.0 * m.head_rng.next_unit() - 1.0) * bound;
  }
  m.head2_w = std::move(w);
  m.head2_b = std::move(b);
  m.class_to_task.resize(grown, task_id);
}

namespace {

// Wires the network on the given tape; param registration only when the
// tape records.
TapedModel wire(const Model& m, Tape& tape, const Tensor& batch) {
  if (batch.rank() != 4 || batch.dim(1) != m.cfg.in_channels || batch.dim(2) != m.cfg.in_h ||
      batch.dim(3) != m.cfg.in_w)
    throw DimensionError("model forward: batch " + shape_str(batch.shape) +
                         " does not match configured input " +
                         std::to_string(m.cfg.in_channels) + "x" + std::to_string(m.cfg.in_h) +
                         "x" + std::to_string(m.cfg.in_w));

  TapedModel tm;
  NodeId x = tape.constant(batch);
  for (std::size_t i = 0; i < m.conv_kernels.size(); ++i) {
    const std::string name = "conv" + std::to_string(i + 1) + ".k";
    NodeId k = tape.param(name, m.conv_kernels[i]);
    tm.params[name] = k;
    x = tape.maxpool2(tape.relu(tape.conv2d(x, k, 1, 1)));
  }
  NodeId flat = tape.flatten2(x);
  NodeId fw = tape.param("fc.w", m.fc_w);
  NodeId fb = tape.param("fc.b", m.fc_b);
  tm.params["fc.w"] = fw;
  tm.params["fc.b"] = fb;
  tm.features = tape.relu(tape.dense_affine(flat, fw, fb));

  if (m.class_count() == 0)
    throw StateError("model forward: head has no classes yet; grow_head first");
  NodeId h1w = tape.param("head1.w", m.head1_w);
  NodeId h1b = tape.param("head1.b", m.head1_b);
  NodeId h2w = tape.param("head2.w", *m.head2_w);
  NodeId h2b = tape.param("head2.b", *m.head2_b);
  tm.params["head1.w"] = h1w;
  tm.params["head1.b"] = h1b;
  tm.params["head2.w"] = h2w;
  tm.params["head2.b"] = h2b;
  NodeId hidden = tape.relu(tape.dense_affine(tm.features, h1w, h1b));
  tm.logits = tape.linear_rows(hidden, h2w, h2b);
  return tm;
}

}  // namespace

Tensor eval_logits(const Model& m, const Tensor& batch) {
  Tape tape(false);
  TapedModel tm = wire(m, tape, batch);
  return tape.value(tm.logits);
}

Tensor eval_features(const Model& m, const Tensor& batch) {
  Tape tape(false);
  if (batch.rank() != 4 || batch.dim(1) != m.cfg.in_channels || batch.dim(2) != m.cfg.in_h ||
      batch.dim(3) != m.cfg.in_w)
    throw DimensionError("model forward: batch " + shape_str(batch.shape) +
                         " does not match configured input");
  NodeId x = tape.constant(batch);
  for (const Tensor& k : m.conv_kernels) {
    NodeId kn = tape.constant(k);
    x = tape.maxpool2(tape.relu(tape.conv2d(x, kn, 1, 1)));
  }
  NodeId feat = tape.relu(
      tape.dense_affine(tape.flatten2(x), tape.constant(m.fc_w), tape.constant(m.fc_b)));
  return tape.value(feat);
}

Tensor l2_normalize_rows(Tensor t) {
  if (t.rank() != 2) throw DimensionError("l2_normalize_rows: expected rank 2");
  const std::size_t n = t.dim(0), d = t.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    double norm = 0.0;
    for (std::size_t j = 0; j < d; ++j) norm += t.data[i * d + j] * t.data[i * d + j];
    norm = std::sqrt(norm);
    if (norm > 1e-12) {
      for (std::size_t j = 0; j < d; ++j) t.data[i * d + j] /= norm;
    }
  }
  return t;
}

TapedModel forward_model(const Model& m, Tape& tape, const Tensor& batch) {
  return wire(m, tape, batch);
}

std::vector<int> apply_mask(const Tensor& logits, const LogitMask& mask) {
  if (logits.rank() != 2) throw DimensionError("apply_mask: logits must be rank 2");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  mask.require_within(k, "apply_mask");
  std::vector<int> preds(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = logits.data.data() + i * k;
    int best = mask.labels().front();
    double best_v = row[best];
    for (int label : mask.labels()) {
      if (row[label] > best_v) {  // strict: ties keep the lowest label
        best_v = row[label];
        best = label;
      }
    }
    preds[i] = best;
  }
  return preds;
}

ParamRefs model_params(Model& m) {
  ParamRefs refs;
  for (std::size_t i = 0; i < m.conv_kernels.size(); ++i)
    refs.emplace_back("conv" + std::to_string(i + 1) + ".k", &m.conv_kernels[i]);
  refs.emplace_back("fc.w", &m.fc_w);
  refs.emplace_back("fc.b", &m.fc_b);
  refs.emplace_back("head1.w", &m.head1_w);
  refs.emplace_back("head1.b", &m.head1_b);
  if (m.head2_w) {
    refs.emplace_back("head2.w", &*m.head2_w);
    refs.emplace_back("head2.b", &*m.head2_b);
  }
  return refs;
}

GradientMap snapshot_params(const Model& m) {
  GradientMap snap;
  for (const auto& [name, t] : model_params(const_cast<Model&>(m))) snap.emplace(name, *t);
  return snap;
}

std::size_t model_param_count(const Model& m) {
  std::size_t n = 0;
  for (const auto& [name, t] : model_params(const_cast<Model&>(m))) n += t->numel();
  return n;
}

namespace ckpt {

namespace {

constexpr std::uint16_t kVersion = 1;

void put_u16(std::string& buf, std::uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(buf, bits);
}

struct Reader {
  const std::vector<char>& buf;
  std::size_t off = 0;
  const std::string& path;

  void need(std::size_t n) const {
    if (off + n > buf.size())
      throw CorruptionError("checkpoint '" + path + "': truncated record", off);
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(static_cast<unsigned char>(buf[off])) |
                      (static_cast<std::uint16_t>(static_cast<unsigned char>(buf[off + 1])) << 8);
    off += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + i])) << (8 * i);
    off += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[off + i])) << (8 * i);
    off += 8;
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(buf.begin() + static_cast<std::ptrdiff_t>(off),
                  buf.begin() + static_cast<std::ptrdiff_t>(off + n));
    off += n;
    return s;
  }
};

}  // namespace

void write_file(const std::string& path, const char magic[4],
                const std::vector<std::pair<std::string, Tensor>>& entries) {
  std::string buf;
  buf.append(magic, 4);
  put_u16(buf, kVersion);
  put_u64(buf, entries.size());
  for (const auto& [name, t] : entries) {
    put_u16(buf, static_cast<std::uint16_t>(name.size()));
    buf.append(name);
    buf.push_back(static_cast<char>(t.rank()));
    for (std::size_t d : t.shape) put_u32(buf, static_cast<std::uint32_t>(d));
    for (double v : t.data) put_f64(buf, v);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

std::vector<std::pair<std::string, Tensor>> read_file(const std::string& path,
                                                      const char magic[4]) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 4 || std::memcmp(buf.data(), magic, 4) != 0)
    throw FormatError("checkpoint '" + path + "': bad magic");
  if (buf.size() < 14) throw CorruptionError("checkpoint '" + path + "': too short", buf.size());
  Reader r{buf, 4, path};
  const std::uint16_t version = r.u16();
  if (version != kVersion)
    throw FormatError("checkpoint '" + path + "': unsupported version " +
                      std::to_string(version));
  const std::uint64_t count = r.u64();
  std::vector<std::pair<std::string, Tensor>> entries;
  entries.reserve(count);
  for (std::uint64_t e = 0; e < count; ++e) {
    const std::uint16_t name_len = r.u16();
    std::string name = r.str(name_len);
    r.need(1);
    const std::size_t rank = static_cast<unsigned char>(buf[r.off++]);
    std::vector<std::size_t> shape(rank);
    for (std::size_t i = 0; i < rank; ++i) shape[i] = r.u32();
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = r.f64();
    entries.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (r.off != buf.size())
    throw CorruptionError("checkpoint '" + path + "': trailing bytes", r.off);
  return entries;
}

}  // namespace ckpt

namespace {

constexpr char kModelMagic[4] = {'C', 'L', 'M', 'D'};

Tensor encode_config(const ModelConfig& cfg) {
  std::vector<double> v = {static_cast<double>(cfg.in_channels),
                           static_cast<double>(cfg.in_h),
                           static_cast<double>(cfg.in_w),
                           static_cast<double>(cfg.feature_dim),
                           static_cast<double>(cfg.head_hidden),
                           static_cast<double>(cfg.seed & 0xffffffffULL),
                           static_cast<double>(cfg.seed >> 32),
                           static_cast<double>(cfg.conv_filters.size())};
  for (std::size_t f : cfg.conv_filters) v.push_back(static_cast<double>(f));
  return Tensor({v.size()}, v);
}

ModelConfig decode_config(const Tensor& t) {
  const std::vector<double>& v = t.data;
  if (v.size() < 8) throw FormatError("checkpoint: malformed config entry");
  ModelConfig cfg;
  cfg.in_channels = static_cast<std::size_t>(v[0]);
  cfg.in_h = static_cast<std::size_t>(v[1]);
  cfg.in_w = static_cast<std::size_t>(v[2]);
  cfg.feature_dim = static_cast<std::size_t>(v[3]);
  cfg.head_hidden = static_cast<std::size_t>(v[4]);
  cfg.seed = static_cast<std::uint64_t>(v[5]) | (static_cast<std::uint64_t>(v[6]) << 32);
  const std::size_t n_conv = static_cast<std::size_t>(v[7]);
  if (v.size() != 8 + n_conv) throw FormatError("checkpoint: malformed config entry");
  cfg.conv_filters.clear();
  for (std::size_t i = 0; i < n_conv; ++i)
    cfg.conv_filters.push_back(static_cast<std::size_t>(v[8 + i]));
  return cfg;
}

}  // namespace

void save_checkpoint(const Model& m, const std::string& path) {
  std::vector<std::pair<std::string, Tensor>> entries;
  entries.emplace_back("meta/config", encode_config(m.cfg));
  std::vector<double> ctt(m.class_to_task.begin(), m.class_to_task.end());
  if (!ctt.empty()) entries.emplace_back("meta/class_to_task", Tensor({ctt.size()}, ctt));
  for (const auto& [name, t] : model_params(const_cast<Model&>(m))) entries.emplace_back(name, *t);
  ckpt::write_file(path, kModelMagic, entries);
}

Model load_checkpoint(const std::string& path) {
  auto entries = ckpt::read_file(path, kModelMagic);
  std::map<std::string, Tensor> by_name;
  for (auto& [name, t] : entries) by_name.emplace(std::move(name), std::move(t));

  auto fetch = [&](const std::string& name) -> Tensor {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw FormatError("checkpoint '" + path + "': missing entry '" + name + "'");
    return it->second;
  };

  const ModelConfig cfg = decode_config(fetch("meta/config"));
  Model m = build_model(cfg);
  for (std::size_t i = 0; i < m.conv_kernels.size(); ++i)
    m.conv_kernels[i] = fetch("conv" + std::to_string(i + 1) + ".k");
  m.fc_w = fetch("fc.w");
  m.fc_b = fetch("fc.b");
  m.head1_w = fetch("head1.w");
  m.head1_b = fetch("head1.b");

  if (by_name.count("meta/class_to_task")) {
    const Tensor ctt = fetch("meta/class_to_task");
    m.class_to_task.assign(ctt.data.begin(), ctt.data.end());
    m.head2_w = fetch("head2.w");
    m.head2_b = fetch("head2.b");
    if (m.head2_w->dim(0) != m.class_count() || m.head2_b->dim(0) != m.class_count())
      throw FormatError("checkpoint '" + path + "': head size disagrees with class_to_task");
    // Reposition the head stream as if the rows had been grown in-process.
    m.head_rng.skip(m.class_count() * cfg.head_hidden);
  }
  return m;
}

}  // namespace clbench
