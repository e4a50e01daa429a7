#pragma once

#include "seenn/tensor.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace seenn {

struct LayerCount {
  std::string name;
  std::int64_t macs = 0;  // multiply-accumulates (analog-input layers)
  std::int64_t sops = 0;  // spike-driven accumulates
};

struct EnergyModel {
  double e_mac = 4.6e-12;  // J per MAC
  double e_ac = 0.9e-12;   // J per accumulate
};

struct OpCountReport {
  std::vector<LayerCount> layers;
  std::int64_t total_macs = 0;
  std::int64_t total_sops = 0;
  double energy_j = 0;
  double avg_t = 0;
};

inline double estimate_energy(const OpCountReport& r, const EnergyModel& m) {
  return m.e_mac * static_cast<double>(r.total_macs) + m.e_ac * static_cast<double>(r.total_sops);
}

/// Run-scoped operation counter. Layers report into the active instance
/// during forward passes; inactive counting costs nothing.
class OpCounter {
 public:
  void add_macs(const std::string& layer, std::int64_t n) { entry(layer).macs += n; }
  void add_sops(const std::string& layer, std::int64_t n) { entry(layer).sops += n; }

  OpCountReport report(const EnergyModel& model = {}, double avg_t = 0) const {
    OpCountReport r;
    for (const auto& [name, lc] : counts_) {
      r.layers.push_back(lc);
      r.total_macs += lc.macs;
      r.total_sops += lc.sops;
    }
    r.avg_t = avg_t;
    r.energy_j = estimate_energy(r, model);
    return r;
  }

  void clear() { counts_.clear(); }

  static OpCounter* active() { return active_; }

  struct Scope {
    explicit Scope(OpCounter& c) : prev_(active_) { active_ = &c; }
    ~Scope() { active_ = prev_; }
    Scope(const Scope&) = delete;

   private:
    OpCounter* prev_;
  };

 private:
  LayerCount& entry(const std::string& name) {
    auto it = counts_.find(name);
    if (it == counts_.end()) it = counts_.emplace(name, LayerCount{name, 0, 0}).first;
    return it->second;
  }
  std::map<std::string, LayerCount> counts_;
  static thread_local OpCounter* active_;
};

std::string op_report_json(const OpCountReport& r);

struct StaticOpCount {
  std::vector<LayerCount> layers;  // macs filled analytically, sops zero
  std::int64_t total_macs = 0;
};

struct ArchConfig;
class SpikingNetwork;
struct Dataset;

/// Analytic per-layer MACs from shapes alone (policy-net ceiling assertion).
StaticOpCount count_static_ops(const ArchConfig& arch);

/// Median wall-clock seconds of fn over `trials` runs after `warmup` runs.
double measure_median_seconds(const std::function<void()>& fn, int trials = 5, int warmup = 2);

enum class ThroughputMode { FixedT, Seenn1 };

/// Single-threaded samples/second; Seenn1 mode uses candidates {1..T} at the
/// given alpha with batch masking enabled.
double measure_throughput(SpikingNetwork& net, const Dataset& data, ThroughputMode mode, int T,
                          double alpha = 0, int trials = 5);

}  // namespace seenn
