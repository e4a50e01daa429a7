#include "seenn/training.hpp"

#include <cmath>
#include <fstream>

namespace seenn {

Tensor tet_loss(const TimestepOutputs& outputs, const std::vector<int>& labels,
                const std::vector<int>& candidates) {
  if (candidates.empty()) throw std::invalid_argument("tet_loss: empty candidate set");
  Tensor total;
  for (int t : candidates) {
    if (t < 1 || t > outputs.timesteps())
      throw std::invalid_argument("tet_loss: candidate timestep " + std::to_string(t) +
                                  " exceeds T=" + std::to_string(outputs.timesteps()));
    Tensor ce = cross_entropy(outputs.at(t), labels);
    total = total.defined() ? add(total, ce) : ce;
  }
  return scale(total, Scalar(1) / static_cast<Scalar>(candidates.size()));
}

Scalar accuracy_at(const TimestepOutputs& outputs, const std::vector<int>& labels, int t) {
  const auto pred = predict(outputs, t);
  int correct = 0;
  for (size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == labels[i]) ++correct;
  return static_cast<Scalar>(correct) / static_cast<Scalar>(pred.size());
}

std::vector<Scalar> evaluate_per_timestep(SpikingNetwork& net, const Dataset& data, int T,
                                          int batch_size) {
  net.set_training(false);
  std::vector<int> correct(T, 0);
  for (int start = 0; start < data.size(); start += batch_size) {
    std::vector<int> idx;
    for (int i = start; i < std::min(start + batch_size, data.size()); ++i) idx.push_back(i);
    Dataset batch = data.subset(idx);
    TimestepOutputs out = forward_temporal(net, batch.images, T);
    for (int t = 1; t <= T; ++t) {
      const auto pred = predict(out, t);
      for (size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == batch.labels[i]) ++correct[t - 1];
    }
  }
  std::vector<Scalar> acc(T);
  for (int t = 0; t < T; ++t) acc[t] = static_cast<Scalar>(correct[t]) / data.size();
  return acc;
}

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& metrics, int T) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open metrics file '" + path + "'");
  os << "epoch,loss,lr";
  for (int t = 1; t <= T; ++t) os << ",acc_t" << t;
  os << "\n";
  os.precision(17);
  for (const auto& m : metrics) {
    os << m.epoch << "," << m.loss << "," << m.lr;
    for (Scalar a : m.acc_per_t) os << "," << a;
    os << "\n";
  }
}

std::vector<EpochMetrics> train(SpikingNetwork& net, const Dataset& train_data,
                                const Dataset& val_data, const TrainConfig& cfg,
                                const std::string& metrics_csv) {
  if (train_data.size() == 0) throw std::invalid_argument("train: empty dataset");
  std::vector<int> candidates = cfg.candidates;
  if (candidates.empty()) {
    if (cfg.loss_mode == LossMode::TET)
      for (int t = 1; t <= cfg.T; ++t) candidates.push_back(t);
    else
      candidates.push_back(cfg.T);
  }

  Rng rng(cfg.seed);
  SgdOptimizer opt(net.parameters(), cfg.lr0 > 0 ? cfg.lr0 : Scalar(1e-12), cfg.momentum,
                   cfg.weight_decay);
  std::vector<int> order(train_data.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  std::vector<EpochMetrics> metrics;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const Scalar lr = cosine_lr(epoch, cfg.epochs, cfg.lr0);
    opt.set_lr(lr > 0 ? lr : Scalar(1e-12));
    rng.shuffle(order);
    net.set_training(true);
    Scalar epoch_loss = 0;
    int batches = 0;
    for (int start = 0; start < train_data.size(); start += cfg.batch_size) {
      std::vector<int> idx(order.begin() + start,
                           order.begin() + std::min<std::size_t>(start + cfg.batch_size,
                                                                 order.size()));
      if (idx.size() < 2) continue;  // BN needs more than one sample
      Dataset batch = train_data.subset(idx);
      Tape tape;
      Tensor loss;
      {
        Tape::Scope scope(tape);
        TimestepOutputs out = forward_temporal(net, batch.images, cfg.T);
        loss = tet_loss(out, batch.labels, candidates);
        if (!std::isfinite(loss.item()))
          throw std::runtime_error("train: loss diverged (non-finite) at epoch " +
                                   std::to_string(epoch) + ", batch " + std::to_string(batches));
        opt.zero_grad();
        tape.backward(loss);
      }
      if (cfg.lr0 > 0) opt.step();
      epoch_loss += loss.item();
      ++batches;
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.loss = batches ? epoch_loss / batches : Scalar(0);
    m.lr = lr;
    m.acc_per_t = evaluate_per_timestep(net, val_data, cfg.T);
    metrics.push_back(std::move(m));
  }
  net.set_training(false);
  if (!metrics_csv.empty()) write_metrics_csv(metrics_csv, metrics, cfg.T);
  return metrics;
}

}  // namespace seenn
