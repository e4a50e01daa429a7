#include "seenn/conversion.hpp"

#include <sstream>

namespace seenn {

SpikingNetwork make_quant_ann(const ArchConfig& arch, int quant_steps, const NeuronConfig& neuron,
                              Rng& rng) {
  ArchConfig a = arch;
  a.quantized_ann = true;
  a.quant_steps = quant_steps;
  return SpikingNetwork(a, neuron, rng);
}

std::vector<EpochMetrics> train_ann(SpikingNetwork& ann, const Dataset& train_data,
                                    const Dataset& val_data, TrainConfig cfg,
                                    const std::string& metrics_csv) {
  if (!ann.arch().quantized_ann)
    throw std::invalid_argument("train_ann: network is not in quantized-ANN mode");
  cfg.T = 1;
  cfg.candidates = {1};
  return train(ann, train_data, val_data, cfg, metrics_csv);
}

ConversionResult convert(SpikingNetwork& ann) {
  if (!ann.arch().quantized_ann)
    throw std::invalid_argument(
        "convert: source network was not trained with quantized activations");
  ArchConfig arch = ann.arch();
  arch.quantized_ann = false;
  NeuronConfig neuron = NeuronConfig::conversion_default(Scalar(1));
  Rng scratch(0);
  ConversionResult result{SpikingNetwork(arch, neuron, scratch), {}};

  // byte-identical weight transfer
  auto src = ann.named_tensors();
  for (auto& [name, dst] : result.snn.named_tensors()) {
    if (name == "lif.thresholds" || name == "lif.init_charge" || name == "lif.tau_reset") continue;
    for (auto& [sname, st] : src)
      if (sname == name) {
        dst.value() = st.value();
        break;
      }
  }

  auto ann_lifs = ann.lif_layers();
  auto snn_lifs = result.snn.lif_layers();
  for (size_t i = 0; i < snn_lifs.size(); ++i) {
    const Scalar lambda = ann_lifs[i]->lambda.value()[0];
    snn_lifs[i]->cfg = NeuronConfig::conversion_default(lambda);
    snn_lifs[i]->lambda.value()[0] = lambda;
    LayerMapping m;
    m.layer = "lif" + std::to_string(i);
    m.lambda = lambda;
    m.threshold = lambda;
    result.mapping.push_back(m);
  }
  return result;
}

std::string ConversionResult::report_json() const {
  std::ostringstream os;
  os.precision(17);
  os << "{\"layers\":[";
  for (size_t i = 0; i < mapping.size(); ++i) {
    if (i) os << ",";
    os << "{\"name\":\"" << mapping[i].layer << "\",\"lambda\":" << mapping[i].lambda
       << ",\"threshold\":" << mapping[i].threshold << "}";
  }
  os << "]}";
  return os.str();
}

}  // namespace seenn
