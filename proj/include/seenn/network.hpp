#pragma once

#include "seenn/efficiency.hpp"
#include "seenn/neuron.hpp"
#include "seenn/ops.hpp"
#include "seenn/random.hpp"

#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace seenn {

// ---------------------------------------------------------------------------
// architecture description
// ---------------------------------------------------------------------------

/// Mini-ResNet grammar: stem conv, stages of residual blocks, global average
/// pool, linear classifier. The Mlp kind swaps conv blocks for linear ones.
struct ArchConfig {
  enum class Kind { Resnet, Mlp };
  Kind kind = Kind::Resnet;
  int in_channels = 1, in_h = 8, in_w = 8;
  int num_classes = 2;
  // resnet
  int stem_channels = 8;
  std::vector<int> stage_channels{8, 16};
  int blocks_per_stage = 1;
  // mlp
  std::vector<int> hidden{32};
  // quantized-ANN mode (QCFS pre-training target for conversion)
  bool quantized_ann = false;
  int quant_steps = 4;
  // plain ReLU ANN (policy network head); overrides spiking dynamics
  bool relu_ann = false;
  // signed Bernoulli rate coding of the input, redrawn every timestep;
  // accumulating more timesteps then genuinely raises the input SNR
  bool stochastic_input = false;

  int input_dim() const { return in_channels * in_h * in_w; }

  std::string to_text() const;
  static ArchConfig from_text(const std::string& text);
};

// ---------------------------------------------------------------------------
// layers
// ---------------------------------------------------------------------------

struct ConvLayer {
  std::string name;
  Tensor w;  // [F,C,kh,kw]
  int stride = 1, pad = 1;
  bool analog_input = false;  // stem and policy-net convs consume analog values

  Tensor forward(Tensor x) const {
    if (OpCounter* oc = OpCounter::active()) {
      const std::int64_t macs_per_sample = static_cast<std::int64_t>(static_macs(x.dim(2), x.dim(3)));
      if (analog_input) {
        oc->add_macs(name, macs_per_sample * x.dim(0));
      } else {
        const std::int64_t in_per_sample = x.size() / x.dim(0);
        std::int64_t nnz = 0;
        for (std::int64_t i = 0; i < x.size(); ++i)
          if (x.value()[i] != Scalar(0)) ++nnz;
        // fan-out per spike = layer MACs / input size
        oc->add_sops(name, static_cast<std::int64_t>(
                               std::llround(static_cast<double>(nnz) * macs_per_sample /
                                            static_cast<double>(in_per_sample))));
      }
    }
    return conv2d(x, w, stride, pad);
  }

  std::int64_t static_macs(int h, int w_in) const {
    const int ho = (h + 2 * pad - this->w.dim(2)) / stride + 1;
    const int wo = (w_in + 2 * pad - this->w.dim(3)) / stride + 1;
    return static_cast<std::int64_t>(this->w.size()) * ho * wo;
  }
};

struct LinearLayer {
  std::string name;
  Tensor w;  // [in,out]
  Tensor b;  // [out]
  bool analog_input = true;

  Tensor forward(Tensor x) const {
    if (OpCounter* oc = OpCounter::active()) {
      const std::int64_t macs_per_sample = static_cast<std::int64_t>(w.size());
      if (analog_input) {
        oc->add_macs(name, macs_per_sample * x.dim(0));
      } else {
        std::int64_t nnz = 0;
        for (std::int64_t i = 0; i < x.size(); ++i)
          if (x.value()[i] != Scalar(0)) ++nnz;
        oc->add_sops(name, nnz * w.dim(1));
      }
    }
    return add_row_bias(matmul(x, w), b);
  }
};

struct BnLayer {
  Tensor gamma, beta;
  Tensor running_mean, running_var;  // plain buffers, never on tape

  Tensor forward(Tensor x, bool training) {
    return batch_norm_t(x, training);
  }

 private:
  Tensor batch_norm_t(Tensor x, bool training) {
    Array& rm = running_mean.value();
    Array& rv = running_var.value();
    return batch_norm(x, gamma, beta, rm, rv, training);
  }
};

struct LifLayer {
  NeuronConfig cfg;
  Tensor u;  // membrane state, lazily shaped per batch

  // quantized-ANN mode: learnable activation ceiling, warm-started on the
  // first training batch
  Tensor lambda;
  bool lambda_set = false;

  Tensor forward(Tensor current) {
    if (!u.defined() || u.shape() != current.shape())
      u = Tensor::full(current.shape(), cfg.threshold * cfg.init_charge);
    auto [s, u_next] = lif_step(u, current, cfg);
    u = u_next;
    return s;
  }
  void reset() { u = Tensor(); }
  void compact(const std::vector<int>& keep) {
    if (u.defined()) u = gather_rows(u, keep);
  }
};

// ---------------------------------------------------------------------------
// spiking network
// ---------------------------------------------------------------------------

struct ResidualBlock {
  ConvLayer conv1, conv2;
  BnLayer bn1, bn2;
  LifLayer lif1, lif2;
  int pool = 1;  // average-pool factor on the block input when downsampling
  std::optional<ConvLayer> shortcut_conv;  // 1x1 projection on channel change
  std::optional<BnLayer> shortcut_bn;
};

struct MlpBlock {
  LinearLayer linear;
  BnLayer bn;
  LifLayer lif;
};

struct TimestepOutputs {
  std::vector<Tensor> accumulated;  // accumulated[t-1] is f_t(x), shape [N,M]

  int timesteps() const { return static_cast<int>(accumulated.size()); }
  int batch() const { return accumulated.empty() ? 0 : accumulated[0].dim(0); }
  int classes() const { return accumulated.empty() ? 0 : accumulated[0].dim(1); }

  /// Accumulated classifier output at timestep t (1-based).
  const Tensor& at(int t) const {
    if (t < 1 || t > timesteps())
      throw std::out_of_range("TimestepOutputs: t=" + std::to_string(t) + " outside [1," +
                              std::to_string(timesteps()) + "]");
    return accumulated[t - 1];
  }
};

/// Argmax prediction at timestep t; ties resolved to the lowest class index.
std::vector<int> predict(const TimestepOutputs& outputs, int t);
std::vector<int> argmax_rows(const Tensor& logits);

class SpikingNetwork {
 public:
  SpikingNetwork() = default;
  SpikingNetwork(const ArchConfig& arch, const NeuronConfig& neuron, Rng& rng);

  /// One timestep: direct-encoded input -> per-block currents/spikes -> logits.
  Tensor step(Tensor x);

  /// Fresh membrane state and accumulator; call before every temporal loop.
  void reset_states();

  /// Drop finished samples from all per-sample state (batched early exit).
  void compact_states(const std::vector<int>& keep);

  /// Runs `extra` more timesteps on top of whatever has already run,
  /// appending accumulated outputs to `out`. States persist between calls.
  void forward_more(const Tensor& x, int extra, TimestepOutputs& out);

  void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }
  int steps_done() const { return steps_done_; }

  std::vector<Tensor> parameters();
  std::vector<std::pair<std::string, Tensor>> named_tensors();  // params + BN buffers

  const ArchConfig& arch() const { return arch_; }
  NeuronConfig& neuron_defaults() { return neuron_; }

  /// Per-layer thresholds (conversion sets these from the learned ceilings).
  std::vector<LifLayer*> lif_layers();
  std::vector<ConvLayer*> conv_layers();

  LinearLayer& classifier() { return classifier_; }

 private:
  ArchConfig arch_;
  NeuronConfig neuron_;
  bool training_ = false;

  Tensor activate(LifLayer& lif, Tensor current);

  ConvLayer stem_;
  BnLayer stem_bn_;
  LifLayer stem_lif_;
  std::vector<ResidualBlock> blocks_;
  std::vector<MlpBlock> mlp_blocks_;
  LinearLayer classifier_;

  Tensor logit_sum_;
  int steps_done_ = 0;
  Rng enc_rng_{kEncodeSeed};  // input-encoding stream; reseeded on reset_states
  static constexpr std::uint64_t kEncodeSeed = 0x5ee7c0de;
};

/// Full temporal forward: reset, run T steps, return all accumulated outputs.
TimestepOutputs forward_temporal(SpikingNetwork& net, const Tensor& x, int T);

inline void reset_states(SpikingNetwork& net) { net.reset_states(); }

// ---------------------------------------------------------------------------
// checkpoint I/O (single-file binary, magic "SEEN")
// ---------------------------------------------------------------------------

void save_checkpoint(const std::string& path, const std::string& arch_text,
                     std::vector<std::pair<std::string, Tensor>> tensors);

struct Checkpoint {
  std::string arch_text;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& find(const std::string& name) const;
};

Checkpoint load_checkpoint(const std::string& path);

void save_network(const std::string& path, SpikingNetwork& net, const std::string& extra = "");
SpikingNetwork load_network(const std::string& path, std::string* extra = nullptr);

}  // namespace seenn
