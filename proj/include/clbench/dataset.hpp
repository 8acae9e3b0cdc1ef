#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "clbench/rng.hpp"
#include "clbench/tensor.hpp"

namespace clbench {

enum class Split { train, val, test };

const char* split_name(Split s);

// 8-bit image classification dataset, immutable after load.
struct ImageDataset {
  std::string name;
  Split split = Split::train;
  std::size_t channels = 0, height = 0, width = 0;
  std::size_t class_count = 0;
  std::vector<std::uint8_t> images;  // N * C * H * W, row-major
  std::vector<std::uint8_t> labels;  // N

  std::size_t size() const { return labels.size(); }
  std::size_t sample_bytes() const { return channels * height * width; }

  // Enforces: N > 0, payload sizes, labels < class_count and, for the train
  // split, that every declared class occurs at least once.
  void validate() const;
};

// LLCB container, all little-endian: "LLCB", u16 version (=1), u64 N,
// u16 C, u16 H, u16 W, u16 class_count, N*C*H*W image bytes, N label bytes.
ImageDataset read_container(const std::string& path, Split split = Split::train,
                            const std::string& name = "");
void write_container(const ImageDataset& ds, const std::string& path);

struct ContainerHeader {
  std::uint16_t version = 0;
  std::uint64_t count = 0;
  std::uint16_t channels = 0, height = 0, width = 0, class_count = 0;
};

// Header fields only; magic and version are still enforced.
ContainerHeader read_container_header(const std::string& path);

// Counts sample materializations and flags any access outside the currently
// allowed index sets. Runs keep one guard across all phases; a violation
// means training or evaluation touched data outside its contract.
class AccessGuard {
 public:
  void begin_phase(std::string label);
  void allow(const ImageDataset* ds, std::span<const std::size_t> indices);
  void note_access(const ImageDataset* ds, std::size_t index);

  std::uint64_t accesses() const { return accesses_; }
  std::uint64_t violations() const { return violations_; }
  const std::vector<std::string>& violation_log() const { return violation_log_; }

 private:
  std::string phase_;
  std::map<const ImageDataset*, std::vector<bool>> allowed_;
  std::uint64_t accesses_ = 0;
  std::uint64_t violations_ = 0;
  std::vector<std::string> violation_log_;  // capped
};

// Batch source over a dataset: pixels mapped to [0,1] by /255 then
// standardized with fixed mean 0.5, std 0.5, landing in [-1,1].
class NormalizedView {
 public:
  explicit NormalizedView(const ImageDataset& ds, AccessGuard* guard = nullptr);

  // [B, C, H, W] batch for the given dataset indices.
  Tensor batch(std::span<const std::size_t> indices) const;
  // Raw (unshifted) labels for the given indices.
  std::vector<int> raw_labels(std::span<const std::size_t> indices) const;

  const ImageDataset& dataset() const { return *ds_; }

  static double normalize_pixel(std::uint8_t raw) {
    return (static_cast<double>(raw) / 255.0 - 0.5) / 0.5;
  }

 private:
  const ImageDataset* ds_;
  AccessGuard* guard_;
};

// Gaussian-blob stand-in for the benchmark datasets: class k is a constant
// image at centers[k] plus pixel noise, clipped to [0,255].
struct SynthConfig {
  std::size_t classes = 8;
  std::size_t train_per_class = 200;
  std::size_t val_per_class = 40;
  std::size_t test_per_class = 40;
  std::vector<double> centers;  // empty -> evenly spaced in [20, 235]
  double sigma = 3.0;
  std::size_t channels = 1, height = 16, width = 16;
  std::uint64_t seed = 0;
  std::string name = "synth";

  std::vector<double> resolved_centers() const;
  void validate() const;
};

ImageDataset gen_synthetic(const SynthConfig& cfg, Split split);

// Index-order stream over [0, n): one seeded permutation per epoch when
// shuffling, identity otherwise; the final partial batch is kept.
class BatchIter {
 public:
  BatchIter(std::size_t n, std::size_t batch_size, RngStream* rng, bool shuffle);

  void begin_epoch();
  // Fills `out` with the next batch of positions; false once exhausted.
  bool next(std::vector<std::size_t>& out);

 private:
  std::size_t n_;
  std::size_t batch_size_;
  RngStream* rng_;
  bool shuffle_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace clbench
