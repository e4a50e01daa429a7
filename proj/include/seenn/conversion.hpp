#pragma once

#include "seenn/network.hpp"
#include "seenn/training.hpp"

#include <string>
#include <vector>

namespace seenn {

struct QuantActConfig {
  int steps = 4;  // l
};

struct LayerMapping {
  std::string layer;
  Scalar lambda = 0;
  Scalar threshold = 0;
};

struct ConversionResult {
  SpikingNetwork snn;
  std::vector<LayerMapping> mapping;

  std::string report_json() const;
};

/// Builds a quantized-activation ANN (single-timestep network, QCFS ceilings).
SpikingNetwork make_quant_ann(const ArchConfig& arch, int quant_steps, const NeuronConfig& neuron,
                              Rng& rng);

/// Trains the quantized ANN with the standard optimizer stack at T=1.
std::vector<EpochMetrics> train_ann(SpikingNetwork& ann, const Dataset& train_data,
                                    const Dataset& val_data, TrainConfig cfg,
                                    const std::string& metrics_csv = "");

/// ANN -> SNN substitution: IF neurons (tau=1, subtract reset, half-threshold
/// initial charge), per-layer threshold = learned ceiling. Weights unchanged.
ConversionResult convert(SpikingNetwork& ann);

}  // namespace seenn
