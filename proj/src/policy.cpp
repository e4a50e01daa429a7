#include "seenn/policy.hpp"

#include "seenn/ops.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace seenn {

namespace {

void validate_candidates(const std::vector<int>& candidates) {
  if (candidates.empty()) throw std::invalid_argument("TimestepPolicy: empty candidate set");
  if (candidates.front() < 1)
    throw std::invalid_argument("TimestepPolicy: candidates must be positive");
  for (size_t i = 1; i < candidates.size(); ++i)
    if (candidates[i] <= candidates[i - 1])
      throw std::invalid_argument("TimestepPolicy: candidates must be strictly increasing");
}

}  // namespace

TimestepPolicy::TimestepPolicy(const ArchConfig& policy_arch, std::vector<int> cands, Scalar b,
                               int ds, const ArchConfig& backbone_arch, Rng& rng)
    : candidates(std::move(cands)), beta(b), downsample(ds) {
  validate_candidates(candidates);
  if (downsample < 1) throw std::invalid_argument("TimestepPolicy: downsample must be >= 1");
  ArchConfig pa = policy_arch;
  pa.relu_ann = true;
  pa.quantized_ann = false;
  pa.num_classes = n_actions();
  pa.in_channels = backbone_arch.in_channels;
  if (backbone_arch.in_h % downsample != 0 || backbone_arch.in_w % downsample != 0)
    throw std::invalid_argument("TimestepPolicy: downsample must divide the input size");
  pa.in_h = backbone_arch.in_h / downsample;
  pa.in_w = backbone_arch.in_w / downsample;

  const std::int64_t head_macs = count_static_ops(pa).total_macs;
  const std::int64_t backbone_macs = count_static_ops(backbone_arch).total_macs;
  if (head_macs * 50 > backbone_macs)
    throw std::invalid_argument("TimestepPolicy: policy head costs " + std::to_string(head_macs) +
                                " static MACs, above 2% of the backbone's " +
                                std::to_string(backbone_macs));
  net = SpikingNetwork(pa, NeuronConfig::training_default(), rng);
}

Tensor TimestepPolicy::probabilities(const Tensor& x) {
  Tensor in = downsample > 1 ? avg_pool2d(x, downsample) : x;
  net.reset_states();
  return softmax(net.step(in));
}

std::vector<PolicyOutput> policy_forward(TimestepPolicy& policy, const Tensor& x, bool sample,
                                         Rng& rng) {
  Tensor v = policy.probabilities(x).detach();
  const int n = v.dim(0), k = v.dim(1);
  std::vector<PolicyOutput> out(n);
  for (int i = 0; i < n; ++i) {
    PolicyOutput& o = out[i];
    o.v.resize(k);
    for (int j = 0; j < k; ++j) o.v[j] = v.value()[static_cast<std::int64_t>(i) * k + j];
    if (sample) {
      double u = rng.uniform();
      int a = k - 1;
      double cum = 0;
      for (int j = 0; j < k; ++j) {
        cum += o.v[j];
        if (u < cum) {
          a = j;
          break;
        }
      }
      o.action = a;
    } else {
      o.action = static_cast<int>(std::max_element(o.v.begin(), o.v.end()) - o.v.begin());
    }
  }
  return out;
}

void exact_policy_gradient(TimestepPolicy& policy, const Tensor& x,
                           const std::vector<double>& rewards) {
  const int n = x.dim(0), k = policy.n_actions();
  if (static_cast<int>(rewards.size()) != n * k)
    throw std::invalid_argument("exact_policy_gradient: expected " + std::to_string(n * k) +
                                " rewards, got " + std::to_string(rewards.size()));
  Array rv(static_cast<std::int64_t>(n) * k);
  for (std::int64_t i = 0; i < rv.size(); ++i) rv[i] = static_cast<Scalar>(rewards[i]);
  Tensor r({n, k}, std::move(rv), false);
  Tape tape;
  Tape::Scope scope(tape);
  // E[R] is linear in the probabilities, so backprop of sum(R .* v) is the
  // exact expectation gradient (equivalently sum_k R_k v_k grad log v_k).
  Tensor j = sum_all(mul(r, policy.probabilities(x)));
  tape.backward(j);
}

std::vector<PolicyEpochMetrics> train_seenn2(SpikingNetwork& net, TimestepPolicy& policy,
                                             const Dataset& train_data, const Dataset& val_data,
                                             const PolicyTrainConfig& cfg,
                                             const std::string& metrics_csv) {
  if (train_data.size() == 0) throw std::invalid_argument("train_seenn2: empty dataset");
  const int k = policy.n_actions();
  const int t_max = policy.candidates.back();

  Rng rng(cfg.seed);
  const Scalar backbone_lr = cfg.backbone_lr < 0 ? cfg.lr : cfg.backbone_lr;
  SgdOptimizer opt_net(net.parameters(), backbone_lr > 0 ? backbone_lr : Scalar(1e-12),
                       cfg.momentum, cfg.weight_decay);
  SgdOptimizer opt(policy.net.parameters(), cfg.lr > 0 ? cfg.lr : Scalar(1e-12), cfg.momentum,
                   cfg.weight_decay);

  std::vector<int> order(train_data.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  std::vector<PolicyEpochMetrics> metrics;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    // keep the backbone's normalization statistics frozen: the small-lr
    // finetune must not let batch statistics drift across timesteps
    net.set_training(false);
    policy.net.set_training(true);
    double reward_sum = 0;
    std::int64_t reward_count = 0;
    for (int start = 0; start < train_data.size(); start += cfg.batch_size) {
      std::vector<int> idx(order.begin() + start,
                           order.begin() + std::min<std::size_t>(start + cfg.batch_size,
                                                                 order.size()));
      if (idx.size() < 2) continue;  // BN needs more than one sample
      Dataset batch = train_data.subset(idx);
      const int n = batch.size();

      Tape tape;
      Tensor loss;
      {
        Tape::Scope scope(tape);
        TimestepOutputs out = forward_temporal(net, batch.images, t_max);
        Tensor v = policy.probabilities(batch.images);

        // rewards from the (detached) per-candidate predictions
        Array rv(static_cast<std::int64_t>(n) * k);
        for (int j = 0; j < k; ++j) {
          const int t = policy.candidates[j];
          const auto pred = predict(out, t);
          for (int i = 0; i < n; ++i)
            rv[static_cast<std::int64_t>(i) * k + j] = static_cast<Scalar>(
                reward(pred[i] == batch.labels[i], t, static_cast<double>(policy.beta)));
        }
        Tensor r({n, k}, rv, false);

        // expected reward under v; training ascends it, so it enters negated
        Tensor expected = scale(sum_all(mul(r, v)), Scalar(1) / n);
        loss = scale(expected, Scalar(-1));

        // optional entropy bonus, annealed to zero: keeps v soft while policy
        // features form, then lets the objective sharpen the choice
        if (cfg.entropy_bonus > 0) {
          const Scalar anneal =
              cfg.entropy_bonus * (Scalar(1) - Scalar(epoch) / std::max(cfg.epochs - 1, 1));
          if (anneal > 0) loss = add(loss, scale(sum_all(mul(v, log(v))), anneal / n));
        }

        // v-weighted classification loss updates only the backbone weights
        Tensor v_const = v.detach();
        for (int j = 0; j < k; ++j) {
          Tensor ce = cross_entropy_per_sample(out.at(policy.candidates[j]), batch.labels);
          Tensor term = scale(sum_all(mul(select_column(v_const, j), ce)), Scalar(1) / n);
          loss = add(loss, term);
        }

        // expected reward per sample for the epoch summary
        for (int i = 0; i < n; ++i) {
          double e = 0;
          for (int j = 0; j < k; ++j)
            e += static_cast<double>(v.value()[static_cast<std::int64_t>(i) * k + j]) *
                 static_cast<double>(rv[static_cast<std::int64_t>(i) * k + j]);
          reward_sum += e;
        }
        reward_count += n;

        if (!std::isfinite(loss.item()))
          throw std::runtime_error("train_seenn2: loss diverged (non-finite) at epoch " +
                                   std::to_string(epoch));
        opt_net.zero_grad();
        opt.zero_grad();
        tape.backward(loss);
      }
      if (backbone_lr > 0) opt_net.step();
      if (cfg.lr > 0) opt.step();
    }

    const auto decisions = infer_seenn2(net, policy, val_data);
    PolicyEpochMetrics m;
    m.epoch = epoch;
    double t_sum = 0;
    int correct = 0;
    for (const auto& d : decisions) {
      t_sum += d.exit_t;
      if (d.correct) ++correct;
    }
    m.avg_t = decisions.empty() ? 0 : t_sum / decisions.size();
    m.accuracy = decisions.empty() ? 0 : static_cast<double>(correct) / decisions.size();
    m.mean_reward = reward_count ? reward_sum / static_cast<double>(reward_count) : 0;
    m.beta = static_cast<double>(policy.beta);
    metrics.push_back(m);
  }
  net.set_training(false);
  policy.net.set_training(false);
  if (!metrics_csv.empty()) write_policy_metrics_csv(metrics_csv, metrics);
  return metrics;
}

std::vector<ExitDecision> infer_seenn2(SpikingNetwork& net, TimestepPolicy& policy,
                                       const Dataset& data, int batch_size) {
  net.set_training(false);
  policy.net.set_training(false);
  std::vector<ExitDecision> decisions(data.size());
  Rng unused(0);

  for (int start = 0; start < data.size(); start += batch_size) {
    std::vector<int> idx;
    for (int i = start; i < std::min(start + batch_size, data.size()); ++i) idx.push_back(i);
    Dataset batch = data.subset(idx);
    const auto actions = policy_forward(policy, batch.images, /*sample=*/false, unused);

    // group rows by chosen timestep, then run each group exactly that long
    for (int j = 0; j < policy.n_actions(); ++j) {
      std::vector<int> rows;
      for (size_t i = 0; i < actions.size(); ++i)
        if (actions[i].action == j) rows.push_back(static_cast<int>(i));
      if (rows.empty()) continue;
      const int t = policy.candidates[j];
      TimestepOutputs out = forward_temporal(net, gather_rows(batch.images, rows), t);
      const Tensor& acc = out.at(t);
      const auto pred = argmax_rows(acc);
      const auto cs = confidence_rows(acc);
      for (size_t i = 0; i < rows.size(); ++i) {
        const int orig = idx[rows[i]];
        ExitDecision d;
        d.sample = orig;
        d.exit_t = t;
        d.predicted = pred[i];
        d.confidence = cs[i];
        d.correct = pred[i] == data.labels[orig];
        decisions[orig] = d;
      }
    }
  }
  return decisions;
}

void save_policy(const std::string& path, TimestepPolicy& policy) {
  std::ostringstream extra;
  extra << "candidates=";
  for (size_t i = 0; i < policy.candidates.size(); ++i)
    extra << (i ? "," : "") << policy.candidates[i];
  extra.precision(17);
  extra << "\nbeta=" << policy.beta << "\ndownsample=" << policy.downsample << "\n";
  save_network(path, policy.net, extra.str());
}

TimestepPolicy load_policy(const std::string& path, const ArchConfig& backbone_arch) {
  std::string extra;
  SpikingNetwork net = load_network(path, &extra);
  TimestepPolicy policy;
  policy.net = std::move(net);

  std::istringstream is(extra);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("policy checkpoint: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "candidates") {
      std::istringstream vs(val);
      std::string tok;
      while (std::getline(vs, tok, ',')) policy.candidates.push_back(std::stoi(tok));
    } else if (key == "beta") {
      policy.beta = static_cast<Scalar>(std::stod(val));
    } else if (key == "downsample") {
      policy.downsample = std::stoi(val);
    } else {
      throw std::runtime_error("policy checkpoint: unknown key '" + key + "'");
    }
  }
  validate_candidates(policy.candidates);
  if (policy.net.arch().num_classes != policy.n_actions())
    throw std::runtime_error("policy checkpoint: head size does not match the candidate set");

  const std::int64_t head_macs = count_static_ops(policy.net.arch()).total_macs;
  const std::int64_t backbone_macs = count_static_ops(backbone_arch).total_macs;
  if (head_macs * 50 > backbone_macs)
    throw std::runtime_error("policy checkpoint: head exceeds 2% of the backbone's static MACs");
  return policy;
}

void write_policy_metrics_csv(const std::string& path,
                              const std::vector<PolicyEpochMetrics>& metrics) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open metrics file '" + path + "'");
  os << "epoch,avg_T,accuracy,mean_reward,beta\n";
  os.precision(17);
  for (const auto& m : metrics)
    os << m.epoch << "," << m.avg_t << "," << m.accuracy << "," << m.mean_reward << "," << m.beta
       << "\n";
}

}  // namespace seenn
