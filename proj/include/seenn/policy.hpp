#pragma once

#include "seenn/early_exit.hpp"
#include "seenn/network.hpp"
#include "seenn/training.hpp"

#include <string>
#include <vector>

namespace seenn {

/// Small conv net over (optionally downsampled) inputs emitting a categorical
/// distribution over candidate timesteps. Construction asserts the static
/// op-count ceiling against the backbone.
struct TimestepPolicy {
  SpikingNetwork net;          // quantized_ann=false, used as a plain ANN head
  std::vector<int> candidates;  // action space, strictly increasing
  Scalar beta = Scalar(1);
  int downsample = 1;  // average-pool factor applied to the input

  TimestepPolicy() = default;
  TimestepPolicy(const ArchConfig& policy_arch, std::vector<int> candidates, Scalar beta,
                 int downsample, const ArchConfig& backbone_arch, Rng& rng);

  /// Policy probabilities v = softmax(f_p(x)), shape [N, n].
  Tensor probabilities(const Tensor& x);

  int n_actions() const { return static_cast<int>(candidates.size()); }
};

struct PolicyOutput {
  std::vector<Scalar> v;  // probabilities, sums to 1
  int action = 0;         // index into the candidate set
};

/// Sampled during training, argmax at deterministic evaluation.
std::vector<PolicyOutput> policy_forward(TimestepPolicy& policy, const Tensor& x, bool sample,
                                         Rng& rng);

/// Eq.-style reward: 2^{-t_k} when correct, -beta otherwise.
inline double reward(bool correct, int t_k, double beta) {
  return correct ? std::pow(2.0, -t_k) : -beta;
}

/// Exact-expectation policy gradient of E[R]: accumulates
/// sum_k R_k v_k grad(log v_k) into the policy parameters (maximization sense;
/// callers minimizing should negate). rewards is [N, n] row-major.
void exact_policy_gradient(TimestepPolicy& policy, const Tensor& x,
                           const std::vector<double>& rewards);

struct PolicyEpochMetrics {
  int epoch = 0;
  double avg_t = 0;
  double accuracy = 0;
  double mean_reward = 0;
  double beta = 0;
};

struct PolicyTrainConfig {
  int epochs = 20;
  int batch_size = 64;
  Scalar lr = Scalar(0.01);
  Scalar backbone_lr = Scalar(-1);   // negative: reuse lr for the backbone
  Scalar entropy_bonus = Scalar(0);  // keeps the policy soft while features form
  Scalar momentum = Scalar(0.9);
  Scalar weight_decay = Scalar(0);
  std::uint64_t seed = 0;
};

/// Joint SEENN-II finetuning: theta by exact policy gradient of -R, backbone
/// weights by the v-weighted (detached) cross-entropy at each candidate.
std::vector<PolicyEpochMetrics> train_seenn2(SpikingNetwork& net, TimestepPolicy& policy,
                                             const Dataset& train_data, const Dataset& val_data,
                                             const PolicyTrainConfig& cfg,
                                             const std::string& metrics_csv = "");

/// Deterministic evaluation: argmax action, run exactly that many timesteps.
std::vector<ExitDecision> infer_seenn2(SpikingNetwork& net, TimestepPolicy& policy,
                                       const Dataset& data, int batch_size = 256);

void save_policy(const std::string& path, TimestepPolicy& policy);
TimestepPolicy load_policy(const std::string& path, const ArchConfig& backbone_arch);

void write_policy_metrics_csv(const std::string& path,
                              const std::vector<PolicyEpochMetrics>& metrics);

}  // namespace seenn
