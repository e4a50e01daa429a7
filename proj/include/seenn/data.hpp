#pragma once

#include "seenn/random.hpp"
#include "seenn/tensor.hpp"

#include <string>
#include <vector>

namespace seenn {

struct Dataset {
  Tensor images;            // [N,C,H,W]
  std::vector<int> labels;  // in [0, num_classes)
  int num_classes = 0;
  std::string split;

  int size() const { return images.defined() ? images.dim(0) : 0; }

  Dataset subset(const std::vector<int>& indices) const;
  Dataset head(int k) const;
};

/// Channel statistics from a train split, reused verbatim on test splits.
struct ChannelStats {
  std::vector<Scalar> mean, stddev;
};

ChannelStats compute_channel_stats(const Dataset& train);
void standardize(Dataset& ds, const ChannelStats& stats);

/// IDX (MNIST) parser: big-endian magic 0x803 images / 0x801 labels.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// CIFAR-10 binary batches: records of 1 label byte + 3072 pixel bytes.
Dataset load_cifar10_bin(const std::vector<std::string>& paths);

struct SyntheticSpec {
  int n_classes = 2;
  int n_per_class = 100;
  int channels = 1, height = 8, width = 8;
  Scalar scale = Scalar(1);  // prototype magnitude
  Scalar sigma_easy = Scalar(0.15);
  Scalar sigma_hard = Scalar(0.9);
  Scalar hard_fraction = Scalar(0);
  Scalar hard_contrast = Scalar(1);  // prototype scale for hard samples
  Scalar hard_mix = Scalar(0);       // interpolation toward the next class's prototype
  std::uint64_t seed = 0;
};

struct SyntheticData {
  Dataset train, test;
  std::vector<bool> train_hard, test_hard;  // planted difficulty tags
};

/// Gaussian class clusters in image shape; a hard_fraction of samples is
/// drawn with the wider spread and tagged for policy evaluation.
SyntheticData make_synthetic(const SyntheticSpec& spec);

}  // namespace seenn
