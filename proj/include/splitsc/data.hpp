#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <string>
#include <vector>

#include "splitsc/common.hpp"

namespace splitsc {

// One image, pixels in [0,1], row-major (y, x, channel).
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> pixels;

  std::size_t size() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
           static_cast<std::size_t>(channels);
  }
  double& at(int y, int x, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

struct DatasetHandle {
  std::string name;
  int height = 0;
  int width = 0;
  int channels = 0;
  std::uint64_t order_seed = 0;  // governs epoch iteration order
  std::vector<Image> train;
  std::vector<Image> test;
};

// How a config names its data. `path` is resolved against the root argument
// of load_dataset when relative.
struct DatasetSpec {
  std::string name = "synthetic";  // synthetic | cifar10 | container
  std::string path;                // cifar batch dir or cached container file
  std::size_t count = 512;         // synthetic only
  int height = 8;
  int width = 8;
  int channels = 3;
  std::uint64_t seed = 1234;
  std::size_t subsample = 0;  // keep a seeded subset of train (0 = all)
};

// Structured synthetic images: smooth low-frequency fields plus random
// rectangles and discs, so a codec has real structure to exploit.
DatasetHandle make_synthetic(std::size_t n, int height, int width, int channels,
                             std::uint64_t seed);

DatasetHandle load_dataset(const DatasetSpec& spec, const std::string& root);

// Raw-tensor cache with header (magic, shape, count, seed) and checksum.
void save_container(const std::string& path, const DatasetHandle& ds);
DatasetHandle load_container(const std::string& path);

// `count` distinct indices out of `total`, deterministic under seed.
std::vector<std::size_t> subsample_indices(std::size_t total, std::size_t count,
                                           std::uint64_t seed);

// Deterministic permutation of [0, n) for one training epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed,
                                     std::uint64_t epoch);

// Stack selected images as rows of a B x (H*W*C) matrix.
Eigen::MatrixXd stack_images(const std::vector<Image>& images,
                             const std::vector<std::size_t>& idx);

}  // namespace splitsc
