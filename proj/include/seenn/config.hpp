#pragma once

#include "seenn/data.hpp"
#include "seenn/efficiency.hpp"
#include "seenn/network.hpp"
#include "seenn/policy.hpp"
#include "seenn/training.hpp"

#include <string>
#include <vector>

namespace seenn {

/// One flat INI-style file covering every module. Unknown sections or keys
/// are rejected; to_text() materializes every default so the saved effective
/// config reproduces the run with the same binary.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "out";

  ArchConfig arch;    // [arch]
  TrainConfig train;  // [train]

  // [exit]
  Scalar exit_alpha = Scalar(0.9);
  std::vector<int> exit_candidates;  // empty -> {1..T}

  // [policy]
  PolicyTrainConfig policy;
  Scalar policy_beta = Scalar(1);
  int policy_downsample = 1;
  std::vector<int> policy_candidates;    // empty -> {1..T}
  std::vector<int> policy_hidden{16};    // MLP head layout

  // [data]
  std::string data_source = "synthetic";  // synthetic | idx | cifar10
  std::string data_images, data_labels;   // idx train paths
  std::string data_test_images, data_test_labels;
  std::vector<std::string> data_cifar;       // cifar10 train batch files
  std::vector<std::string> data_cifar_test;  // cifar10 test batch files
  int data_limit = 0;                     // keep first K samples (0 = all)
  bool data_standardize = true;
  SyntheticSpec synth;

  // [efficiency]
  EnergyModel energy;

  static RunConfig from_file(const std::string& path);
  static RunConfig from_text(const std::string& text);
  std::string to_text() const;

  std::vector<int> effective_exit_candidates() const;
  std::vector<int> effective_policy_candidates() const;

  /// Policy-head architecture derived from [policy] and the backbone shape.
  ArchConfig policy_arch() const;

  /// Loads per [data]; synthetic returns planted tags, file formats do not.
  SyntheticData load_data() const;
};

void write_effective_config(const std::string& path, const RunConfig& cfg);

}  // namespace seenn
