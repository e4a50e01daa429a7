#include "seenn/efficiency.hpp"

#include "seenn/early_exit.hpp"
#include "seenn/network.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <sstream>

namespace seenn {

std::string op_report_json(const OpCountReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "{\"layers\":[";
  for (size_t i = 0; i < r.layers.size(); ++i) {
    if (i) os << ",";
    os << "{\"name\":\"" << r.layers[i].name << "\",\"macs\":" << r.layers[i].macs
       << ",\"sops\":" << r.layers[i].sops << "}";
  }
  os << "],\"total_macs\":" << r.total_macs << ",\"total_sops\":" << r.total_sops
     << ",\"energy_j\":" << r.energy_j << ",\"avg_t\":" << r.avg_t << "}";
  return os.str();
}

StaticOpCount count_static_ops(const ArchConfig& arch) {
  StaticOpCount out;
  auto push = [&](const std::string& name, std::int64_t macs) {
    out.layers.push_back({name, macs, 0});
    out.total_macs += macs;
  };
  if (arch.kind == ArchConfig::Kind::Resnet) {
    int h = arch.in_h, w = arch.in_w;
    push("stem.conv", static_cast<std::int64_t>(arch.stem_channels) * arch.in_channels * 9 * h * w);
    int in_ch = arch.stem_channels;
    for (size_t s = 0; s < arch.stage_channels.size(); ++s) {
      const int out_ch = arch.stage_channels[s];
      for (int b = 0; b < arch.blocks_per_stage; ++b) {
        const bool downsample = (s > 0 && b == 0);
        const bool project = downsample || in_ch != out_ch;
        const std::string prefix =
            "stage" + std::to_string(s) + ".block" + std::to_string(b) + ".";
        const int ho = downsample ? h / 2 : h, wo = downsample ? w / 2 : w;
        push(prefix + "conv1", static_cast<std::int64_t>(out_ch) * in_ch * 9 * ho * wo);
        push(prefix + "conv2", static_cast<std::int64_t>(out_ch) * out_ch * 9 * ho * wo);
        if (project)
          push(prefix + "shortcut.conv", static_cast<std::int64_t>(out_ch) * in_ch * ho * wo);
        h = ho;
        w = wo;
        in_ch = out_ch;
      }
    }
    push("classifier", static_cast<std::int64_t>(in_ch) * arch.num_classes);
  } else {
    int in_dim = arch.input_dim();
    for (size_t i = 0; i < arch.hidden.size(); ++i) {
      push("mlp.block" + std::to_string(i) + ".linear",
           static_cast<std::int64_t>(in_dim) * arch.hidden[i]);
      in_dim = arch.hidden[i];
    }
    push("classifier", static_cast<std::int64_t>(in_dim) * arch.num_classes);
  }
  return out;
}

double measure_median_seconds(const std::function<void()>& fn, int trials, int warmup) {
  for (int i = 0; i < warmup; ++i) fn();
  std::vector<double> times;
  for (int i = 0; i < trials; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

double measure_throughput(SpikingNetwork& net, const Dataset& data, ThroughputMode mode, int T,
                          double alpha, int trials) {
  net.set_training(false);
  std::function<void()> run;
  if (mode == ThroughputMode::FixedT) {
    run = [&]() { forward_temporal(net, data.images, T); };
  } else {
    std::vector<int> candidates(T);
    for (int t = 0; t < T; ++t) candidates[t] = t + 1;
    ExitConfig cfg{static_cast<Scalar>(alpha), candidates};
    run = [&net, &data, cfg]() { infer_seenn1(net, data, cfg); };
  }
  const double sec = measure_median_seconds(run, trials);
  return static_cast<double>(data.size()) / sec;
}

}  // namespace seenn
