// End-to-end acceptance checks. Each criterion prints exactly one PASS/FAIL
// line; the process exits nonzero if any criterion fails. The optional first
// argument is the path to the command-line binary (used by the determinism
// criterion); without it that criterion exercises the library API only.

#include "seenn/config.hpp"
#include "seenn/conversion.hpp"
#include "seenn/early_exit.hpp"
#include "seenn/efficiency.hpp"
#include "seenn/policy.hpp"
#include "seenn/training.hpp"

#include "gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;
using namespace seenn;
using namespace seenn::testing;

namespace {

bool g_all_pass = true;

void report(int n, const std::string& what, bool pass, const std::string& detail = "") {
  std::cout << "criterion " << n << " (" << what << "): " << (pass ? "PASS" : "FAIL");
  if (!detail.empty()) std::cout << "  [" << detail << "]";
  std::cout << "\n";
  g_all_pass = g_all_pass && pass;
}

SyntheticData make_data(int classes, int per_class, Scalar sigma_easy, Scalar hard_fraction,
                        Scalar sigma_hard, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n_classes = classes;
  spec.n_per_class = per_class;
  spec.channels = 1;
  spec.height = 8;
  spec.width = 8;
  spec.sigma_easy = sigma_easy;
  spec.hard_fraction = hard_fraction;
  spec.sigma_hard = sigma_hard;
  spec.seed = seed;
  return make_synthetic(spec);
}

ArchConfig backbone_arch(int classes) {
  ArchConfig a;
  a.kind = ArchConfig::Kind::Mlp;
  a.in_channels = 1;
  a.in_h = 8;
  a.in_w = 8;
  a.num_classes = classes;
  a.hidden = {256, 128};
  return a;
}

SpikingNetwork train_backbone(const SyntheticData& data, int classes, int T, int epochs,
                              LossMode mode, std::uint64_t seed) {
  Rng rng(seed);
  SpikingNetwork net(backbone_arch(classes), NeuronConfig::training_default(), rng);
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 32;
  cfg.lr0 = Scalar(0.1);
  cfg.T = T;
  cfg.loss_mode = mode;
  cfg.seed = seed;
  train(net, data.train, data.test, cfg);
  return net;
}

double accuracy_of(const std::vector<ExitDecision>& decisions) {
  int correct = 0;
  for (const auto& d : decisions) correct += d.correct;
  return static_cast<double>(correct) / decisions.size();
}

double avg_exit(const std::vector<ExitDecision>& decisions) {
  double s = 0;
  for (const auto& d : decisions) s += d.exit_t;
  return s / decisions.size();
}

// --------------------------------------------------------------------------
// 1. gradient correctness: individual ops and the full temporal pipeline
// --------------------------------------------------------------------------
void criterion1() {
  Rng rng(101);
  Scalar worst = 0;
  auto check = [&](Tensor& param, const std::function<Tensor()>& build) {
    param.zero_grad();
    Tape tape;
    {
      Tape::Scope scope(tape);
      tape.backward(build());
    }
    const Array autodiff = param.grad();
    const Array numeric = numeric_grad(param, [&]() { return build().item(); });
    worst = std::max(worst, max_rel_err(autodiff, numeric, Scalar(1e-5)));
  };

  {  // matmul + bias + softmax cross-entropy
    Tensor w = rng.randn({5, 4}, 0.5, true);
    Tensor x = rng.randn({3, 5});
    const std::vector<int> labels{1, 0, 3};
    check(w, [&]() { return cross_entropy(matmul(x, w), labels); });
  }
  {  // conv + pooling
    Tensor k = rng.randn({3, 2, 3, 3}, 0.4, true);
    Tensor x = rng.randn({2, 2, 6, 6});
    check(k, [&]() { return mean_all(avg_pool2d(conv2d(x, k, 1, 1), 2)); });
  }
  {  // batch norm (training statistics)
    Tensor g = Tensor::full({4}, Scalar(1.3), true);
    Tensor b = rng.randn({4}, 0.2, true);
    Tensor x = rng.randn({6, 4});
    Array rm = Array::Zero(4), rv = Array::Zero(4);
    check(g, [&]() {
      Array m = rm, v = rv;
      return mean_all(mul(batch_norm(x, g, b, m, v, true), batch_norm(x, g, b, m, v, true)));
    });
  }
  {  // relu, log-softmax composition
    Tensor a = rng.randn({8}, 1.0, true);
    check(a, [&]() { return sum_all(relu(a)); });
  }

  // full temporal pipeline: <= 200 parameters, T=3, smoothed firing twin
  NeuronConfig neuron = NeuronConfig::training_default();
  neuron.soft_forward = true;
  neuron.detach_reset = false;
  ArchConfig arch;
  arch.kind = ArchConfig::Kind::Mlp;
  arch.in_channels = 1;
  arch.in_h = 2;
  arch.in_w = 2;
  arch.num_classes = 2;
  arch.hidden = {6};
  SpikingNetwork net(arch, neuron, rng);
  net.set_training(true);
  std::int64_t n_params = 0;
  for (auto& p : net.parameters()) n_params += p.size();

  Tensor x = rng.randn({4, 1, 2, 2});
  const std::vector<int> labels{0, 1, 1, 0};
  const std::vector<int> candidates{1, 2, 3};
  auto loss_value = [&]() {
    TimestepOutputs out = forward_temporal(net, x, 3);
    return tet_loss(out, labels, candidates).item();
  };
  for (auto& p : net.parameters()) {
    p.zero_grad();
    Tape tape;
    {
      Tape::Scope scope(tape);
      TimestepOutputs out = forward_temporal(net, x, 3);
      tape.backward(tet_loss(out, labels, candidates));
    }
    const Array autodiff = p.grad();
    const Array numeric = numeric_grad(p, loss_value);
    worst = std::max(worst, max_rel_err(autodiff, numeric, Scalar(1e-5)));
  }

  std::ostringstream detail;
  detail << "max rel err " << worst << ", pipeline params " << n_params;
  report(1, "gradient correctness vs finite differences", worst < 1e-4 && n_params <= 200,
         detail.str());
}

// --------------------------------------------------------------------------
// 2. average-exit-time formula dominates the empirical value
// --------------------------------------------------------------------------
void criterion2() {
  Rng rng(202);
  bool ok = true;
  for (int trial = 0; trial < 10000 && ok; ++trial) {
    CorrectnessMatrix m;
    m.n = 1 + static_cast<int>(rng.uniform_int(32));
    m.T = 1 + static_cast<int>(rng.uniform_int(8));
    m.a.resize(static_cast<std::size_t>(m.n) * m.T);
    for (std::size_t i = 0; i < m.a.size(); ++i) m.a[i] = rng.uniform() < 0.5;
    const double published = aet(m), empirical = empirical_aet(m);
    ok = ok && published >= empirical - 1e-12;
    ok = ok && published >= 1.0 - 1e-12 && published <= m.T + 1e-12;
    ok = ok && empirical >= 1.0 - 1e-12 && empirical <= m.T + 1e-12;

    // monotone rows (once correct, stays correct): exact equality
    CorrectnessMatrix mono = m;
    for (int i = 0; i < mono.n; ++i) {
      bool seen = false;
      for (int t = 1; t <= mono.T; ++t) {
        seen = seen || mono.at(i, t);
        mono.set(i, t, seen);
      }
    }
    ok = ok && std::abs(aet(mono) - empirical_aet(mono)) <= 1e-12;
  }
  report(2, "exit-time formula bounds on 10000 random matrices", ok);
}

// --------------------------------------------------------------------------
// shared fixture: a trained T=4 backbone on easy synthetic data
// --------------------------------------------------------------------------
struct Trained {
  SyntheticData data;
  SpikingNetwork net;
};

Trained& trained_easy() {
  static Trained t = [] {
    Trained r;
    r.data = make_data(2, 60, Scalar(0.3), 0, Scalar(1), 303);
    r.net = train_backbone(r.data, 2, 4, 10, LossMode::TET, 303);
    return r;
  }();
  return t;
}

// --------------------------------------------------------------------------
// 3. early-exit consistency against fixed-budget inference
// --------------------------------------------------------------------------
void criterion3() {
  auto& f = trained_easy();
  const int T = 4;
  f.net.set_training(false);
  TimestepOutputs out = forward_temporal(f.net, f.data.test.images, T);
  const auto fixed_pred = predict(out, T);

  bool ok = true;
  std::string why;

  {  // candidate set {T} reproduces fixed-T decisions exactly
    const auto d = infer_seenn1(f.net, f.data.test, ExitConfig{Scalar(0.9), {T}});
    for (const auto& x : d)
      if (x.exit_t != T || x.predicted != fixed_pred[x.sample]) ok = false;
    if (!ok) why = "single-candidate mismatch";
  }
  if (ok) {  // alpha above one forces the full budget with identical outputs
    const auto d = infer_seenn1(f.net, f.data.test, ExitConfig{Scalar(1.5), {1, 2, 3, 4}});
    for (const auto& x : d)
      if (x.exit_t != T || x.predicted != fixed_pred[x.sample]) ok = false;
    if (!ok) why = "forced full budget mismatch";
  }
  if (ok) {  // chance-level threshold exits everything at the first candidate
    const auto d = infer_seenn1(f.net, f.data.test, ExitConfig{Scalar(0.5), {1, 2, 3, 4}});
    for (const auto& x : d)
      if (x.exit_t != 1) ok = false;
    if (!ok) why = "chance-level threshold did not exit at t=1";
  }
  if (ok) {  // exit times non-decreasing over an ascending threshold grid
    std::vector<int> prev(f.data.test.size(), 0);
    for (int k = 0; k < 20 && ok; ++k) {
      const Scalar alpha = Scalar(0.5) + Scalar(k) * Scalar(0.5) / 19;
      const auto d = infer_seenn1(f.net, f.data.test, ExitConfig{alpha, {1, 2, 3, 4}});
      for (const auto& x : d) {
        if (x.exit_t < prev[x.sample]) ok = false;
        prev[x.sample] = x.exit_t;
      }
    }
    if (!ok) why = "exit time not monotone in the threshold";
  }
  report(3, "early-exit consistency", ok, why);
}

// --------------------------------------------------------------------------
// 4. exact policy gradient: finite differences, sampling, and invariance
// --------------------------------------------------------------------------
void criterion4() {
  bool ok = true;
  std::ostringstream detail;

  {  // scalar-parameter toy: d/dtheta sum_k R_k softmax([theta, 0])_k
    Tensor logits({1, 2}, Array::Zero(2), true);
    logits.value()[0] = Scalar(0.3);
    Tensor r({1, 2}, Array(2), false);
    r.value() << Scalar(0.7), Scalar(-0.2);
    auto objective = [&]() { return sum_all(mul(r, softmax(logits))).item(); };
    logits.zero_grad();
    Tape tape;
    {
      Tape::Scope scope(tape);
      tape.backward(sum_all(mul(r, softmax(logits))));
    }
    const Scalar exact = logits.grad()[0];
    const Scalar h = Scalar(1e-6);
    const Scalar orig = logits.value()[0];
    logits.value()[0] = orig + h;
    const Scalar fp = objective();
    logits.value()[0] = orig - h;
    const Scalar fm = objective();
    logits.value()[0] = orig;
    const Scalar fd = (fp - fm) / (2 * h);
    const Scalar rel = std::abs(exact - fd) / std::max(std::abs(fd), Scalar(1e-12));
    ok = ok && rel < 1e-6;
    detail << "toy rel err " << rel;
  }

  {  // the exact gradient is the mean of the sampled score-function estimator
    Rng rng(404);
    Tensor logits({4, 3}, Array(12), true);
    for (int i = 0; i < 12; ++i) logits.value()[i] = static_cast<Scalar>(rng.normal() * 0.5);
    Array rewards(12);
    for (int i = 0; i < 12; ++i) rewards[i] = static_cast<Scalar>(rng.uniform(-1, 1));
    Tensor r({4, 3}, rewards, false);

    logits.zero_grad();
    Tape tape;
    {
      Tape::Scope scope(tape);
      tape.backward(sum_all(mul(r, softmax(logits))));
    }
    const Array exact = logits.grad();

    Tensor probs = softmax(logits.detach());
    Array estimate = Array::Zero(12);
    const int samples = 100000;
    for (int s = 0; s < samples; ++s) {
      for (int i = 0; i < 4; ++i) {
        // categorical draw from row i
        const double u = rng.uniform();
        double cum = 0;
        int a = 2;
        for (int j = 0; j < 3; ++j) {
          cum += probs.value()[i * 3 + j];
          if (u < cum) {
            a = j;
            break;
          }
        }
        // score-function term: R_a * (onehot(a) - v), the gradient of log v_a
        const Scalar ra = rewards[i * 3 + a];
        for (int j = 0; j < 3; ++j)
          estimate[i * 3 + j] += ra * ((j == a ? Scalar(1) : Scalar(0)) - probs.value()[i * 3 + j]);
      }
    }
    estimate /= samples;
    const double cosine = (exact * estimate).sum() /
                          (std::sqrt(exact.square().sum()) * std::sqrt(estimate.square().sum()));
    ok = ok && cosine > 0.99;
    detail << ", sampled-estimator cosine " << cosine;
  }

  {  // constant rewards: probabilities sum to one, gradient must vanish
    Rng rng(405);
    ArchConfig head;
    head.kind = ArchConfig::Kind::Mlp;
    head.hidden = {8};
    TimestepPolicy policy(head, {1, 2, 4}, Scalar(1), 2, backbone_arch(2), rng);
    policy.net.set_training(false);
    Tensor x = rng.randn({4, 1, 8, 8});
    for (auto& p : policy.net.parameters()) p.zero_grad();
    exact_policy_gradient(policy, x, std::vector<double>(12, 2.0));
    Scalar worst = 0;
    for (auto& p : policy.net.parameters())
      if (p.has_grad()) worst = std::max(worst, p.grad().abs().maxCoeff());
    ok = ok && worst <= 1e-10;
    detail << ", constant-reward grad " << worst;
  }
  report(4, "exact policy gradient", ok, detail.str());
}

// --------------------------------------------------------------------------
// 5. confidence thresholding halves the timestep budget without accuracy loss
// --------------------------------------------------------------------------
void criterion5() {
  auto& f = trained_easy();
  const int T = 4;
  const Scalar fixed_acc = evaluate_per_timestep(f.net, f.data.test, T).back();

  bool found = false;
  double best_avg = T, best_acc = 0;
  for (Scalar alpha : {Scalar(0.6), Scalar(0.7), Scalar(0.8), Scalar(0.9), Scalar(0.95),
                       Scalar(0.99)}) {
    const auto d = infer_seenn1(f.net, f.data.test, ExitConfig{alpha, {1, 2, 3, 4}});
    const double acc = accuracy_of(d), avg = avg_exit(d);
    if (acc >= fixed_acc - 0.005 && avg <= 0.5 * T) {
      found = true;
      best_avg = avg;
      best_acc = acc;
      break;
    }
  }
  std::ostringstream detail;
  detail << "fixed acc " << fixed_acc << ", early-exit acc " << best_acc << " at avg T "
         << best_avg;
  report(5, "halved budget at matched accuracy", found, detail.str());
}

// --------------------------------------------------------------------------
// 6. learned timestep policy separates planted easy/hard samples
// --------------------------------------------------------------------------
void criterion6() {
  const int T = 2;
  // Hard samples carry a deliberately faint prototype; under the stochastic
  // input encoding their effective signal grows with the timestep budget, so
  // extra timesteps genuinely pay off for them and for them only.
  SyntheticSpec spec;
  spec.n_classes = 4;
  spec.n_per_class = 150;
  spec.channels = 1;
  spec.height = 8;
  spec.width = 8;
  spec.scale = Scalar(2.5);
  spec.sigma_easy = Scalar(0.2);
  spec.hard_fraction = Scalar(0.5);
  spec.sigma_hard = Scalar(0.02);
  spec.hard_contrast = Scalar(0.08);
  spec.seed = 606;
  SyntheticData data = make_synthetic(spec);

  ArchConfig arch = backbone_arch(4);
  arch.stochastic_input = true;
  Rng rng(606);
  SpikingNetwork pretrained(arch, NeuronConfig::training_default(), rng);
  TrainConfig tc;
  tc.epochs = 10;
  tc.batch_size = 32;
  tc.lr0 = Scalar(0.1);
  tc.weight_decay = Scalar(5e-4);
  tc.T = T;
  tc.seed = 606;
  train(pretrained, data.train, data.test, tc);
  const std::string stash = "acceptance_backbone.ckpt";
  save_network(stash, pretrained);

  ArchConfig head;
  head.kind = ArchConfig::Kind::Mlp;
  head.hidden = {16};

  auto finetune = [&](Scalar beta, Scalar lr, Scalar backbone_lr, int epochs) {
    SpikingNetwork net = load_network(stash);
    Rng policy_rng(607);
    TimestepPolicy policy(head, {1, 2}, beta, 2, net.arch(), policy_rng);
    PolicyTrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = 32;
    cfg.lr = lr;
    cfg.backbone_lr = backbone_lr;
    cfg.entropy_bonus = Scalar(0.05);
    cfg.seed = 607;
    train_seenn2(net, policy, data.train, data.test, cfg);
    return std::pair<SpikingNetwork, TimestepPolicy>(std::move(net), std::move(policy));
  };

  bool ok = true;
  std::ostringstream detail;
  {
    auto [net, policy] = finetune(Scalar(1), Scalar(0.05), Scalar(0.005), 15);
    const auto d = infer_seenn2(net, policy, data.test);
    double easy_t = 0, hard_t = 0;
    int easy_n = 0, hard_n = 0;
    for (const auto& x : d) {
      if (data.test_hard[x.sample]) {
        hard_t += x.exit_t;
        ++hard_n;
      } else {
        easy_t += x.exit_t;
        ++easy_n;
      }
    }
    easy_t /= easy_n;
    hard_t /= hard_n;
    const double gap = hard_t - easy_t;

    const Scalar fixed_acc = evaluate_per_timestep(net, data.test, T).back();
    const double acc = accuracy_of(d), avg = avg_exit(d);
    ok = gap >= 0.3 && acc >= fixed_acc - 0.01 && avg < T;
    detail << "easy/hard gap " << gap << ", acc " << acc << " vs fixed " << fixed_acc
           << ", avg T " << avg;
  }
  {  // penalty extremes drive the budget to the bracket endpoints
    auto [net_lo, policy_lo] = finetune(Scalar(0.01), Scalar(0.05), Scalar(0.005), 10);
    const double lo = avg_exit(infer_seenn2(net_lo, policy_lo, data.test));
    auto [net_hi, policy_hi] = finetune(Scalar(200), Scalar(0.005), Scalar(0.005), 15);
    const double hi = avg_exit(infer_seenn2(net_hi, policy_hi, data.test));
    ok = ok && lo <= 1.05 && hi >= 0.95 * T;
    detail << ", beta extremes avg T " << lo << " / " << hi;
  }
  std::remove(stash.c_str());
  report(6, "policy separates planted difficulty", ok, detail.str());
}

// --------------------------------------------------------------------------
// 7. quantized-activation conversion parity and rate coding
// --------------------------------------------------------------------------
void criterion7() {
  SyntheticData data = make_data(2, 60, Scalar(0.3), 0, Scalar(1), 707);
  Rng rng(707);
  ArchConfig arch = backbone_arch(2);
  arch.hidden = {64};  // a single hidden layer keeps the rate approximation tight
  SpikingNetwork ann = make_quant_ann(arch, 4, NeuronConfig::training_default(), rng);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 32;
  cfg.lr0 = Scalar(0.05);
  cfg.seed = 707;
  train_ann(ann, data.train, data.test, cfg);
  const Scalar ann_acc = evaluate_per_timestep(ann, data.test, 1).back();

  ConversionResult result = convert(ann);
  const Scalar snn_acc = evaluate_per_timestep(result.snn, data.test, 4)[3];
  bool ok = std::abs(static_cast<double>(snn_acc - ann_acc)) <= 0.02;

  // rate-coding grid: constant current in (0, V], varying budget
  int grid = 0;
  bool rate_ok = true;
  for (int ci = 1; ci <= 10; ++ci) {
    for (int T : {1, 2, 3, 5, 8, 13, 16, 21, 27, 32}) {
      const Scalar V = Scalar(1.1);
      const Scalar c = V * Scalar(ci) / 10;
      NeuronConfig ncfg = NeuronConfig::conversion_default(V);
      Tensor u = Tensor::full({1}, V * ncfg.init_charge);
      Tensor cur = Tensor::full({1}, c);
      int spikes = 0;
      for (int t = 0; t < T; ++t) {
        auto [s, u1] = lif_step(u, cur, ncfg);
        u = u1;
        spikes += static_cast<int>(s.value()[0]);
      }
      const int expected = static_cast<int>(std::lround(static_cast<double>(c) * T / V));
      if (std::abs(spikes - expected) > 1) rate_ok = false;
      ++grid;
    }
  }
  std::ostringstream detail;
  detail << "ann acc " << ann_acc << ", snn acc " << snn_acc << ", rate grid " << grid;
  report(7, "conversion parity and rate coding", ok && rate_ok && grid == 100, detail.str());
}

// --------------------------------------------------------------------------
// 8. operation counting and throughput
// --------------------------------------------------------------------------
void criterion8() {
  auto& f = trained_easy();
  f.net.set_training(false);
  bool ok = true;
  std::ostringstream detail;

  OpCounter fixed;
  {
    OpCounter::Scope scope(fixed);
    forward_temporal(f.net, f.data.test.images, 4);
  }
  OpCounter dynamic;
  double avg_t = 4;
  {
    OpCounter::Scope scope(dynamic);
    const auto d = infer_seenn1(f.net, f.data.test, ExitConfig{Scalar(0.9), {1, 2, 3, 4}});
    avg_t = avg_exit(d);
  }
  if (avg_t < 4) {
    ok = dynamic.report().total_sops < fixed.report().total_sops;
    detail << "sops " << dynamic.report().total_sops << " < " << fixed.report().total_sops;
  } else {
    detail << "no early exits at this threshold";
  }

  {  // policy head stays under 2% of the backbone's static compute
    ArchConfig head;
    head.kind = ArchConfig::Kind::Mlp;
    head.hidden = {16};
    head.in_channels = 1;
    head.in_h = 4;
    head.in_w = 4;
    head.num_classes = 4;
    const double ratio = static_cast<double>(count_static_ops(head).total_macs) /
                         static_cast<double>(count_static_ops(backbone_arch(2)).total_macs);
    ok = ok && ratio <= 0.02;
    detail << ", policy ratio " << ratio;
  }

  {  // wall-clock: immediate exits run at least twice as fast as the full budget
    const double fixed_tps =
        measure_throughput(f.net, f.data.test, ThroughputMode::FixedT, 4, 0, 5);
    const double exit_tps =
        measure_throughput(f.net, f.data.test, ThroughputMode::Seenn1, 4, 0.5, 5);
    ok = ok && exit_tps >= 2.0 * fixed_tps;
    detail << ", throughput x" << exit_tps / fixed_tps;
  }
  report(8, "operation counting and throughput", ok, detail.str());
}

// --------------------------------------------------------------------------
// 9. bit-identical reruns for a fixed seed
// --------------------------------------------------------------------------
std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void criterion9(const std::string& cli) {
  bool ok = true;
  std::string detail;
  if (!cli.empty()) {
    const fs::path dir = fs::temp_directory_path() / "seenn_acceptance";
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto write_cfg = [&](const fs::path& p, const std::string& out) {
      std::ofstream os(p);
      os << "seed=5\noutput_dir=" << out
         << "\n[arch]\nin_h=8\nin_w=8\nstem_channels=4\nstage_channels=4,8\nnum_classes=2\n"
            "[train]\nepochs=2\nbatch_size=16\nlr0=0.05\ntimesteps=3\n"
            "[data]\nheight=8\nwidth=8\nn_per_class=20\n";
    };
    write_cfg(dir / "a.ini", (dir / "a").string());
    write_cfg(dir / "b.ini", (dir / "b").string());
    auto run = [&](const std::string& args) {
      const std::string cmd = cli + " " + args + " >/dev/null 2>&1";
      const int rc = std::system(cmd.c_str());
      return WIFEXITED(rc) && WEXITSTATUS(rc) == 0;
    };
    ok = run("train --config " + (dir / "a.ini").string()) &&
         run("train --config " + (dir / "b.ini").string());
    ok = ok && slurp(dir / "a" / "train_metrics.csv") == slurp(dir / "b" / "train_metrics.csv");
    ok = ok && slurp(dir / "a" / "snn.ckpt") == slurp(dir / "b" / "snn.ckpt");
    ok = ok &&
         run("eval --config " + (dir / "a.ini").string() + " --ckpt " +
             (dir / "a" / "snn.ckpt").string() + " --mode seenn1 --alpha 0.8") &&
         run("eval --config " + (dir / "b.ini").string() + " --ckpt " +
             (dir / "b" / "snn.ckpt").string() + " --mode seenn1 --alpha 0.8");
    ok = ok && slurp(dir / "a" / "eval.csv") == slurp(dir / "b" / "eval.csv");
    detail = "paired command reruns";
    fs::remove_all(dir);
  } else {
    // library-level fallback: identical seeds give identical training traces
    SyntheticData data = make_data(2, 20, Scalar(0.3), 0, Scalar(1), 909);
    auto run_once = [&]() {
      Rng rng(909);
      SpikingNetwork net(backbone_arch(2), NeuronConfig::training_default(), rng);
      TrainConfig cfg;
      cfg.epochs = 2;
      cfg.batch_size = 16;
      cfg.T = 2;
      cfg.seed = 909;
      std::ostringstream os;
      os.precision(17);
      for (const auto& m : train(net, data.train, data.test, cfg)) os << m.loss << ";";
      return os.str();
    };
    ok = run_once() == run_once();
    detail = "library-level rerun";
  }
  report(9, "deterministic reruns", ok, detail);
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion5();
  criterion6();
  criterion7();
  criterion8();
  criterion9(cli);
  std::cout << (g_all_pass ? "acceptance: all criteria passed"
                           : "acceptance: some criteria FAILED")
            << "\n";
  return g_all_pass ? 0 : 1;
}
