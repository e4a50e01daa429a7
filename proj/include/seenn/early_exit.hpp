#pragma once

#include "seenn/data.hpp"
#include "seenn/network.hpp"

#include <string>
#include <vector>

namespace seenn {

struct ExitConfig {
  Scalar alpha = Scalar(0.9);   // confidence threshold in (0, 1] (>1 forces full-T)
  std::vector<int> candidates;  // strictly increasing, max <= T

  void validate() const;
  int last() const { return candidates.back(); }
};

struct ExitDecision {
  int sample = 0;
  int exit_t = 0;
  int predicted = 0;
  Scalar confidence = 0;
  bool correct = false;
};

/// a[i][t-1]: accumulated prediction at timestep t is correct for sample i.
struct CorrectnessMatrix {
  int n = 0, T = 0;
  std::vector<bool> a;  // row-major n x T

  bool at(int i, int t) const { return a[static_cast<std::size_t>(i) * T + (t - 1)]; }
  void set(int i, int t, bool v) { a[static_cast<std::size_t>(i) * T + (t - 1)] = v; }

  static CorrectnessMatrix from_outputs(const TimestepOutputs& outputs,
                                        const std::vector<int>& labels);
};

/// CS = max softmax probability of one logit row.
Scalar confidence(const Tensor& accumulated_logits);

/// Per-row confidence of a [N,M] logits tensor.
std::vector<Scalar> confidence_rows(const Tensor& logits);

/// Confidence-threshold inference. Runs the temporal loop incrementally,
/// masking exited samples out of later timesteps; exits at the first
/// candidate with CS >= alpha, or at the last candidate otherwise.
std::vector<ExitDecision> infer_seenn1(SpikingNetwork& net, const Dataset& data,
                                       const ExitConfig& cfg, int batch_size = 256);

/// Published AET formula (assumes nested correctness sets).
double aet(const CorrectnessMatrix& m);

/// Mean earliest correct timestep, falling back to T for never-correct rows.
double empirical_aet(const CorrectnessMatrix& m);

struct SweepRow {
  Scalar alpha = 0;
  double avg_t = 0;
  double accuracy = 0;
  std::vector<int> exit_histogram;  // counts per candidate timestep
};

std::vector<SweepRow> sweep_alpha(SpikingNetwork& net, const Dataset& data,
                                  const std::vector<Scalar>& alphas,
                                  const std::vector<int>& candidates);

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows,
                     const std::vector<int>& candidates);
std::string sweep_json(const std::vector<SweepRow>& rows, const std::vector<int>& candidates);

/// Compact bitset file: u32 N, u32 T, then row-major bits LSB-first per byte.
void save_correctness_matrix(const std::string& path, const CorrectnessMatrix& m);
CorrectnessMatrix load_correctness_matrix(const std::string& path);

}  // namespace seenn
