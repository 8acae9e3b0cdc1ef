#include "clbench/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "clbench/errors.hpp"

namespace clbench {

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

void ImageDataset::validate() const {
  if (size() == 0) throw DataError("dataset '" + name + "': N must be > 0");
  if (channels == 0 || height == 0 || width == 0 || class_count == 0)
    throw DataError("dataset '" + name + "': zero dimension in header");
  if (images.size() != size() * sample_bytes())
    throw DataError("dataset '" + name + "': image payload size " +
                    std::to_string(images.size()) + " does not match N*C*H*W");
  std::vector<bool> seen(class_count, false);
  for (std::uint8_t l : labels) {
    if (l >= class_count)
      throw DataError("dataset '" + name + "': label " + std::to_string(l) +
                      " >= class count " + std::to_string(class_count));
    seen[l] = true;
  }
  if (split == Split::train) {
    for (std::size_t c = 0; c < class_count; ++c) {
      if (!seen[c])
        throw DataError("dataset '" + name + "': class " + std::to_string(c) +
                        " missing from train split");
    }
  }
}

namespace {

constexpr char kMagic[4] = {'L', 'L', 'C', 'B'};
constexpr std::uint16_t kVersion = 1;

void put_u16(std::string& buf, std::uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint16_t get_u16(const std::vector<char>& buf, std::size_t off) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(buf[off])) |
         (static_cast<std::uint16_t>(static_cast<unsigned char>(buf[off + 1])) << 8);
}

std::uint64_t get_u64(const std::vector<char>& buf, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[off + i])) << (8 * i);
  return v;
}

constexpr std::size_t kHeaderBytes = 4 + 2 + 8 + 2 + 2 + 2 + 2;

std::string stem_of(const std::string& path) {
  std::size_t slash = path.find_last_of("/\\");
  std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
  std::size_t dot = base.find('.');
  return dot == std::string::npos ? base : base.substr(0, dot);
}

}  // namespace

ImageDataset read_container(const std::string& path, Split split, const std::string& name) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open container '" + path + "'");
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (buf.size() < kHeaderBytes)
    throw CorruptionError("container '" + path + "': truncated header", buf.size());
  if (std::memcmp(buf.data(), kMagic, 4) != 0)
    throw FormatError("container '" + path + "': bad magic");
  const std::uint16_t version = get_u16(buf, 4);
  if (version != kVersion)
    throw FormatError("container '" + path + "': unsupported version " + std::to_string(version));

  ImageDataset ds;
  ds.name = name.empty() ? stem_of(path) : name;
  ds.split = split;
  const std::uint64_t n = get_u64(buf, 6);
  ds.channels = get_u16(buf, 14);
  ds.height = get_u16(buf, 16);
  ds.width = get_u16(buf, 18);
  ds.class_count = get_u16(buf, 20);

  const std::size_t image_bytes = static_cast<std::size_t>(n) * ds.sample_bytes();
  const std::size_t expected = kHeaderBytes + image_bytes + static_cast<std::size_t>(n);
  if (buf.size() < expected)
    throw CorruptionError("container '" + path + "': payload ends early, expected " +
                              std::to_string(expected) + " bytes",
                          buf.size());
  if (buf.size() > expected)
    throw CorruptionError("container '" + path + "': trailing bytes after payload", expected);

  ds.images.assign(buf.begin() + kHeaderBytes, buf.begin() + kHeaderBytes + image_bytes);
  ds.labels.assign(buf.begin() + kHeaderBytes + image_bytes, buf.end());
  ds.validate();
  return ds;
}

ContainerHeader read_container_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open container '" + path + "'");
  std::vector<char> buf(kHeaderBytes);
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(kHeaderBytes))
    throw CorruptionError("container '" + path + "': truncated header",
                          static_cast<std::size_t>(in.gcount()));
  if (std::memcmp(buf.data(), kMagic, 4) != 0)
    throw FormatError("container '" + path + "': bad magic");
  ContainerHeader h;
  h.version = get_u16(buf, 4);
  if (h.version != kVersion)
    throw FormatError("container '" + path + "': unsupported version " +
                      std::to_string(h.version));
  h.count = get_u64(buf, 6);
  h.channels = get_u16(buf, 14);
  h.height = get_u16(buf, 16);
  h.width = get_u16(buf, 18);
  h.class_count = get_u16(buf, 20);
  return h;
}

void write_container(const ImageDataset& ds, const std::string& path) {
  ds.validate();
  std::string buf;
  buf.reserve(kHeaderBytes + ds.images.size() + ds.labels.size());
  buf.append(kMagic, 4);
  put_u16(buf, kVersion);
  put_u64(buf, ds.size());
  put_u16(buf, static_cast<std::uint16_t>(ds.channels));
  put_u16(buf, static_cast<std::uint16_t>(ds.height));
  put_u16(buf, static_cast<std::uint16_t>(ds.width));
  put_u16(buf, static_cast<std::uint16_t>(ds.class_count));
  buf.append(reinterpret_cast<const char*>(ds.images.data()), ds.images.size());
  buf.append(reinterpret_cast<const char*>(ds.labels.data()), ds.labels.size());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

void AccessGuard::begin_phase(std::string label) {
  phase_ = std::move(label);
  allowed_.clear();
}

void AccessGuard::allow(const ImageDataset* ds, std::span<const std::size_t> indices) {
  std::vector<bool>& mask = allowed_[ds];
  mask.resize(ds->size(), false);
  for (std::size_t i : indices) mask[i] = true;
}

void AccessGuard::note_access(const ImageDataset* ds, std::size_t index) {
  ++accesses_;
  auto it = allowed_.find(ds);
  const bool ok = it != allowed_.end() && index < it->second.size() && it->second[index];
  if (!ok) {
    ++violations_;
    if (violation_log_.size() < 32) {
      violation_log_.push_back("phase '" + phase_ + "': out-of-contract access to " + ds->name +
                               "/" + split_name(ds->split) + "[" + std::to_string(index) + "]");
    }
  }
}

NormalizedView::NormalizedView(const ImageDataset& ds, AccessGuard* guard)
    : ds_(&ds), guard_(guard) {}

Tensor NormalizedView::batch(std::span<const std::size_t> indices) const {
  const std::size_t bytes = ds_->sample_bytes();
  Tensor t = Tensor::zeros({indices.size(), ds_->channels, ds_->height, ds_->width});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const std::size_t idx = indices[b];
    if (guard_) guard_->note_access(ds_, idx);
    const std::uint8_t* src = ds_->images.data() + idx * bytes;
    double* dst = t.data.data() + b * bytes;
    for (std::size_t i = 0; i < bytes; ++i) dst[i] = normalize_pixel(src[i]);
  }
  return t;
}

std::vector<int> NormalizedView::raw_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out(indices.size());
  for (std::size_t b = 0; b < indices.size(); ++b) out[b] = ds_->labels[indices[b]];
  return out;
}

std::vector<double> SynthConfig::resolved_centers() const {
  if (!centers.empty()) return centers;
  std::vector<double> c(classes);
  if (classes == 1) {
    c[0] = 127.5;
    return c;
  }
  for (std::size_t k = 0; k < classes; ++k)
    c[k] = 20.0 + (235.0 - 20.0) * static_cast<double>(k) / static_cast<double>(classes - 1);
  return c;
}

void SynthConfig::validate() const {
  if (classes == 0) throw ConfigError("synth: classes must be >= 1");
  if (sigma <= 0.0) throw ConfigError("synth: sigma must be > 0");
  if (train_per_class == 0) throw ConfigError("synth: train_per_class must be >= 1");
  if (channels == 0 || height == 0 || width == 0)
    throw ConfigError("synth: image dimensions must be positive");
  std::vector<double> c = resolved_centers();
  if (c.size() != classes)
    throw ConfigError("synth: " + std::to_string(c.size()) + " centers for " +
                      std::to_string(classes) + " classes");
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t j = i + 1; j < c.size(); ++j) {
      if (c[i] == c[j])
        throw ConfigError("synth: duplicate blob center " + std::to_string(c[i]) +
                          " for classes " + std::to_string(i) + " and " + std::to_string(j));
    }
  }
}

ImageDataset gen_synthetic(const SynthConfig& cfg, Split split) {
  cfg.validate();
  const std::size_t per_class = split == Split::train  ? cfg.train_per_class
                                : split == Split::val  ? cfg.val_per_class
                                                       : cfg.test_per_class;
  if (per_class == 0) throw ConfigError("synth: per-class count for split is 0");

  const std::vector<double> centers = cfg.resolved_centers();
  RngStream rng = seed_rng(cfg.seed, std::string("synth.") + split_name(split));

  ImageDataset ds;
  ds.name = cfg.name;
  ds.split = split;
  ds.channels = cfg.channels;
  ds.height = cfg.height;
  ds.width = cfg.width;
  ds.class_count = cfg.classes;
  const std::size_t bytes = ds.sample_bytes();
  ds.images.resize(cfg.classes * per_class * bytes);
  ds.labels.resize(cfg.classes * per_class);

  std::size_t s = 0;
  for (std::size_t k = 0; k < cfg.classes; ++k) {
    for (std::size_t i = 0; i < per_class; ++i, ++s) {
      ds.labels[s] = static_cast<std::uint8_t>(k);
      std::uint8_t* img = ds.images.data() + s * bytes;
      for (std::size_t p = 0; p < bytes; ++p) {
        const double v = std::round(centers[k] + cfg.sigma * rng.next_gaussian());
        img[p] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
      }
    }
  }
  ds.validate();
  return ds;
}

BatchIter::BatchIter(std::size_t n, std::size_t batch_size, RngStream* rng, bool shuffle)
    : n_(n), batch_size_(batch_size), rng_(rng), shuffle_(shuffle) {
  if (batch_size_ == 0) throw ConfigError("batch_iter: batch size must be >= 1");
  if (shuffle_ && rng_ == nullptr) throw UsageError("batch_iter: shuffle requires an RNG stream");
  order_.resize(n_);
  for (std::size_t i = 0; i < n_; ++i) order_[i] = i;
  cursor_ = n_;  // exhausted until begin_epoch
}

void BatchIter::begin_epoch() {
  if (shuffle_) {
    rng_->permutation(n_, order_);
  }
  cursor_ = 0;
}

bool BatchIter::next(std::vector<std::size_t>& out) {
  out.clear();
  if (cursor_ >= n_) return false;
  const std::size_t end = std::min(n_, cursor_ + batch_size_);
  out.assign(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
             order_.begin() + static_cast<std::ptrdiff_t>(end));
  cursor_ = end;
  return true;
}

}  // namespace clbench
