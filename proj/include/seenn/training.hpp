#pragma once

#include "seenn/data.hpp"
#include "seenn/network.hpp"
#include "seenn/optim.hpp"

#include <string>
#include <vector>

namespace seenn {

enum class LossMode { TET, LastStepCE };

struct TrainConfig {
  int epochs = 30;
  int batch_size = 64;
  Scalar lr0 = Scalar(0.1);
  Scalar momentum = Scalar(0.9);
  Scalar weight_decay = Scalar(5e-4);
  int T = 4;
  LossMode loss_mode = LossMode::TET;
  std::uint64_t seed = 0;
  std::vector<int> candidates;  // defaults to {1..T} for TET, {T} for LastStepCE
};

struct EpochMetrics {
  int epoch = 0;
  Scalar loss = 0;
  Scalar lr = 0;
  std::vector<Scalar> acc_per_t;  // validation accuracy at t = 1..T
};

/// Mean over candidate timesteps of cross-entropy on the accumulated output.
Tensor tet_loss(const TimestepOutputs& outputs, const std::vector<int>& labels,
                const std::vector<int>& candidates);

/// Fraction of samples predicted correctly from accumulated output at t.
Scalar accuracy_at(const TimestepOutputs& outputs, const std::vector<int>& labels, int t);

/// Full-T evaluation helper: per-timestep accuracies on a dataset.
std::vector<Scalar> evaluate_per_timestep(SpikingNetwork& net, const Dataset& data, int T,
                                          int batch_size = 256);

/// SGD + momentum + cosine schedule over the dataset. Throws on NaN loss.
/// Metrics are returned and, when metrics_csv is non-empty, also written as
/// CSV with header epoch,loss,lr,acc_t1,...,acc_tT.
std::vector<EpochMetrics> train(SpikingNetwork& net, const Dataset& train_data,
                                const Dataset& val_data, const TrainConfig& cfg,
                                const std::string& metrics_csv = "");

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& metrics, int T);

}  // namespace seenn
