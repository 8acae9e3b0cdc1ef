#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "clbench/dataset.hpp"
#include "clbench/errors.hpp"
#include "clbench/rng.hpp"

using namespace clbench;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::vector<char>((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
}

ImageDataset tiny_dataset() {
  ImageDataset ds;
  ds.name = "tiny";
  ds.split = Split::train;
  ds.channels = 1;
  ds.height = 2;
  ds.width = 2;
  ds.class_count = 1;
  ds.images = {0, 127, 200, 255};
  ds.labels = {0};
  return ds;
}

}  // namespace

TEST_CASE("minimal container round-trips bit-identically") {
  const std::string path = temp_path("clbench_tiny.llcb");
  const ImageDataset ds = tiny_dataset();
  write_container(ds, path);
  const ImageDataset back = read_container(path, Split::train);
  CHECK(back.images == ds.images);
  CHECK(back.labels == ds.labels);
  CHECK(back.channels == 1);
  CHECK(back.height == 2);
  CHECK(back.width == 2);
  CHECK(back.class_count == 1);

  // writing again produces identical bytes
  const std::string path2 = temp_path("clbench_tiny2.llcb");
  write_container(back, path2);
  CHECK(slurp(path) == slurp(path2));
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("benchmark-sized container: 11959 train samples, 8 classes") {
  ImageDataset ds;
  ds.name = "bench-sized";
  ds.split = Split::train;
  ds.channels = 1;
  ds.height = 28;
  ds.width = 28;
  ds.class_count = 8;
  const std::size_t n = 11959;
  ds.images.resize(n * 28 * 28);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < ds.images.size(); ++i)
    ds.images[i] = static_cast<std::uint8_t>(i % 251);
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = static_cast<std::uint8_t>(i % 8);

  const std::string path = temp_path("clbench_large.llcb");
  write_container(ds, path);
  const ContainerHeader h = read_container_header(path);
  CHECK(h.count == n);
  CHECK(h.class_count == 8);
  const ImageDataset back = read_container(path, Split::train);
  CHECK(back.size() == n);
  CHECK(back.images == ds.images);
  std::remove(path.c_str());
}

TEST_CASE("corrupt containers are rejected with context") {
  const std::string path = temp_path("clbench_bad.llcb");
  const ImageDataset ds = tiny_dataset();
  write_container(ds, path);

  // bad magic
  {
    std::vector<char> bytes = slurp(path);
    bytes[0] = 'X';
    std::ofstream(path, std::ios::binary | std::ios::trunc)
        .write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    CHECK_THROWS_AS(read_container(path), FormatError);
  }
  // truncated payload: header claims more samples than bytes present
  {
    write_container(ds, path);
    std::vector<char> bytes = slurp(path);
    bytes[6] = 2;  // N = 2, payload for 1
    std::ofstream(path, std::ios::binary | std::ios::trunc)
        .write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    try {
      read_container(path);
      FAIL("expected CorruptionError");
    } catch (const CorruptionError& e) {
      CHECK(e.byte_offset > 0);
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("empty dataset write is rejected") {
  ImageDataset ds = tiny_dataset();
  ds.labels.clear();
  ds.images.clear();
  CHECK_THROWS_AS(write_container(ds, temp_path("clbench_none.llcb")), DataError);
}

TEST_CASE("train split must contain every declared class") {
  ImageDataset ds = tiny_dataset();
  ds.class_count = 2;  // class 1 never appears
  CHECK_THROWS_AS(ds.validate(), DataError);
  ds.split = Split::test;
  CHECK_NOTHROW(ds.validate());
}

TEST_CASE("round-trip property on random datasets") {
  RngStream rng(13, "test");
  for (int rep = 0; rep < 20; ++rep) {
    ImageDataset ds;
    ds.name = "rand";
    ds.split = Split::train;
    ds.channels = 1 + rng.next_below(3);
    ds.height = 1 + rng.next_below(6);
    ds.width = 1 + rng.next_below(6);
    ds.class_count = 1 + rng.next_below(5);
    const std::size_t n = ds.class_count + rng.next_below(20);
    ds.images.resize(n * ds.sample_bytes());
    ds.labels.resize(n);
    for (auto& b : ds.images) b = static_cast<std::uint8_t>(rng.next_below(256));
    for (std::size_t i = 0; i < n; ++i)
      ds.labels[i] = static_cast<std::uint8_t>(i < ds.class_count ? i : rng.next_below(ds.class_count));

    const std::string path = temp_path("clbench_rt.llcb");
    write_container(ds, path);
    const ImageDataset back = read_container(path);
    CHECK(back.images == ds.images);
    CHECK(back.labels == ds.labels);
    std::remove(path.c_str());
  }
}

TEST_CASE("normalization endpoints and injectivity on the pixel grid") {
  CHECK(NormalizedView::normalize_pixel(255) == 1.0);
  CHECK(NormalizedView::normalize_pixel(0) == -1.0);
  CHECK(NormalizedView::normalize_pixel(127) == doctest::Approx(-0.00392).epsilon(1e-3));
  std::set<double> values;
  for (int p = 0; p <= 255; ++p) values.insert(NormalizedView::normalize_pixel(p));
  CHECK(values.size() == 256);
}

TEST_CASE("synthetic generator basics") {
  SynthConfig cfg;
  cfg.classes = 8;
  cfg.train_per_class = 100;
  cfg.seed = 3;
  cfg.height = 8;
  cfg.width = 8;

  const ImageDataset train = gen_synthetic(cfg, Split::train);
  CHECK(train.size() == 800);
  CHECK(train.class_count == 8);

  // determinism
  const ImageDataset again = gen_synthetic(cfg, Split::train);
  CHECK(train.images == again.images);

  // near-zero sigma collapses every image onto its class center
  SynthConfig tight = cfg;
  tight.sigma = 1e-12;
  const ImageDataset t = gen_synthetic(tight, Split::train);
  const std::vector<double> centers = tight.resolved_centers();
  for (std::size_t i = 0; i < t.size(); ++i) {
    const std::uint8_t expect =
        static_cast<std::uint8_t>(std::lround(centers[t.labels[i]]));
    for (std::size_t p = 0; p < t.sample_bytes(); ++p)
      CHECK(t.images[i * t.sample_bytes() + p] == expect);
  }
}

TEST_CASE("synthetic generator rejects bad configs") {
  SynthConfig cfg;
  cfg.sigma = 0.0;
  CHECK_THROWS_AS(gen_synthetic(cfg, Split::train), ConfigError);
  cfg.sigma = 1.0;
  cfg.centers = {10.0, 10.0};
  cfg.classes = 2;
  CHECK_THROWS_AS(gen_synthetic(cfg, Split::train), ConfigError);
}

TEST_CASE("batch_iter covers every index exactly once per epoch") {
  RngStream rng = seed_rng(0, "shuffle");
  BatchIter iter(10, 32, &rng, true);
  std::vector<std::size_t> batch;

  iter.begin_epoch();
  CHECK(iter.next(batch));
  CHECK(batch.size() == 10);  // single partial batch
  CHECK_FALSE(iter.next(batch));

  for (int epoch = 0; epoch < 3; ++epoch) {
    iter.begin_epoch();
    std::set<std::size_t> seen;
    while (iter.next(batch)) {
      for (std::size_t i : batch) CHECK(seen.insert(i).second);
    }
    CHECK(seen.size() == 10);
  }
}

TEST_CASE("batch_iter shuffling is seed-deterministic") {
  auto order_with = [](std::uint64_t seed) {
    RngStream rng = seed_rng(seed, "shuffle");
    BatchIter iter(23, 5, &rng, true);
    iter.begin_epoch();
    std::vector<std::size_t> order, batch;
    while (iter.next(batch)) order.insert(order.end(), batch.begin(), batch.end());
    return order;
  };
  CHECK(order_with(7) == order_with(7));
  CHECK(order_with(7) != order_with(8));
}

TEST_CASE("access guard counts violations") {
  SynthConfig cfg;
  cfg.classes = 2;
  cfg.train_per_class = 4;
  cfg.sigma = 1.0;
  cfg.height = 2;
  cfg.width = 2;
  cfg.seed = 1;
  const ImageDataset ds = gen_synthetic(cfg, Split::train);
  AccessGuard guard;
  guard.begin_phase("probe");
  const std::vector<std::size_t> allowed = {0, 1, 2};
  guard.allow(&ds, allowed);

  NormalizedView view(ds, &guard);
  const std::vector<std::size_t> ok = {0, 2};
  view.batch(ok);
  CHECK(guard.accesses() == 2);
  CHECK(guard.violations() == 0);

  const std::vector<std::size_t> bad = {5};
  view.batch(bad);
  CHECK(guard.violations() == 1);
  CHECK(guard.violation_log().size() == 1);

  // fresh phase clears permissions
  guard.begin_phase("next");
  view.batch(ok);
  CHECK(guard.violations() == 3);
}
