#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "seenn/policy.hpp"

#include "gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

using namespace seenn;
using namespace seenn::testing;

namespace {

ArchConfig backbone_arch() {
  ArchConfig a;
  a.kind = ArchConfig::Kind::Resnet;
  a.in_channels = 1;
  a.in_h = 8;
  a.in_w = 8;
  a.num_classes = 2;
  a.stem_channels = 8;
  a.stage_channels = {8, 16};
  a.blocks_per_stage = 1;
  return a;
}

ArchConfig head_arch() {
  ArchConfig a;
  a.kind = ArchConfig::Kind::Mlp;
  a.hidden = {8};
  return a;
}

TimestepPolicy make_policy(std::uint64_t seed = 1, int downsample = 2) {
  Rng rng(seed);
  return TimestepPolicy(head_arch(), {1, 2, 4}, Scalar(1), downsample, backbone_arch(), rng);
}

}  // namespace

TEST_CASE("reward closed forms") {
  CHECK(reward(true, 1, 1.0) == doctest::Approx(0.5));
  CHECK(reward(true, 4, 1.0) == doctest::Approx(0.0625));
  CHECK(reward(false, 1, 1.0) == doctest::Approx(-1.0));
  CHECK(reward(false, 3, 2.5) == doctest::Approx(-2.5));
}

TEST_CASE("construction enforces the op-count ceiling") {
  Rng rng(1);
  ArchConfig fat;
  fat.kind = ArchConfig::Kind::Mlp;
  fat.hidden = {4096, 4096};
  CHECK_THROWS_AS(TimestepPolicy(fat, {1, 2}, Scalar(1), 1, backbone_arch(), rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(TimestepPolicy(head_arch(), {2, 1}, Scalar(1), 1, backbone_arch(), rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(TimestepPolicy(head_arch(), {1, 2}, Scalar(1), 3, backbone_arch(), rng),
                  std::invalid_argument);  // 3 does not divide 8
  CHECK_NOTHROW(make_policy());
}

TEST_CASE("probabilities are a proper distribution over the candidates") {
  TimestepPolicy policy = make_policy(3);
  policy.net.set_training(false);
  Rng rng(4);
  Tensor x = rng.randn({5, 1, 8, 8});
  Tensor v = policy.probabilities(x);
  REQUIRE(v.dim(0) == 5);
  REQUIRE(v.dim(1) == 3);
  for (int i = 0; i < 5; ++i) {
    Scalar row = 0;
    for (int j = 0; j < 3; ++j) {
      const Scalar p = v.value()[i * 3 + j];
      CHECK(p >= Scalar(0));
      row += p;
    }
    CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("deterministic policy_forward picks the argmax") {
  TimestepPolicy policy = make_policy(5);
  policy.net.set_training(false);
  Rng rng(6);
  Tensor x = rng.randn({4, 1, 8, 8});
  Tensor v = policy.probabilities(x);
  const auto outs = policy_forward(policy, x, /*sample=*/false, rng);
  for (int i = 0; i < 4; ++i) {
    int best = 0;
    for (int j = 1; j < 3; ++j)
      if (v.value()[i * 3 + j] > v.value()[i * 3 + best]) best = j;
    CHECK(outs[i].action == best);
  }
}

TEST_CASE("sampled policy_forward follows the distribution") {
  TimestepPolicy policy = make_policy(7);
  policy.net.set_training(false);
  Rng data_rng(8), sample_rng(9);
  Tensor x = data_rng.randn({1, 1, 8, 8});
  Tensor v = policy.probabilities(x);

  std::vector<int> counts(3, 0);
  const int trials = 20000;
  for (int i = 0; i < trials; ++i)
    ++counts[policy_forward(policy, x, /*sample=*/true, sample_rng)[0].action];
  for (int j = 0; j < 3; ++j) {
    const double freq = static_cast<double>(counts[j]) / trials;
    CHECK(freq == doctest::Approx(static_cast<double>(v.value()[j])).epsilon(0.15));
  }
}

TEST_CASE("exact policy gradient matches finite differences") {
  TimestepPolicy policy = make_policy(10);
  policy.net.set_training(false);
  Rng rng(11);
  Tensor x = rng.randn({3, 1, 8, 8});
  std::vector<double> rewards(9);
  for (auto& r : rewards) r = rng.uniform(-1, 1);

  auto objective = [&]() {
    Tensor v = policy.probabilities(x);
    Scalar j = 0;
    for (std::int64_t i = 0; i < v.size(); ++i)
      j += static_cast<Scalar>(rewards[i]) * v.value()[i];
    return j;
  };

  for (auto& p : policy.net.parameters()) {
    p.zero_grad();
    exact_policy_gradient(policy, x, rewards);
    const Array autodiff = p.grad();
    const Array numeric = numeric_grad(p, objective, Scalar(1e-5));
    CHECK(max_rel_err(autodiff, numeric, Scalar(1e-5)) < 1e-4);
  }
}

TEST_CASE("constant rewards produce a vanishing gradient") {
  TimestepPolicy policy = make_policy(12);
  policy.net.set_training(false);
  Rng rng(13);
  Tensor x = rng.randn({4, 1, 8, 8});
  const std::vector<double> rewards(12, 3.7);  // probabilities sum to one
  for (auto& p : policy.net.parameters()) p.zero_grad();
  exact_policy_gradient(policy, x, rewards);
  for (auto& p : policy.net.parameters())
    if (p.has_grad()) CHECK(p.grad().abs().maxCoeff() <= 1e-10);
}

TEST_CASE("joint finetuning runs and reports coherent metrics") {
  SyntheticSpec spec;
  spec.n_classes = 2;
  spec.n_per_class = 30;
  spec.height = 8;
  spec.width = 8;
  spec.sigma_easy = Scalar(0.2);
  spec.hard_fraction = Scalar(0.3);
  spec.sigma_hard = Scalar(1.2);
  spec.seed = 14;
  SyntheticData data = make_synthetic(spec);

  Rng rng(15);
  SpikingNetwork net(backbone_arch(), NeuronConfig::training_default(), rng);
  TimestepPolicy policy = make_policy(16);

  PolicyTrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.lr = Scalar(0.01);
  cfg.seed = 16;
  const std::string path = "policy_metrics_test.csv";
  const auto metrics = train_seenn2(net, policy, data.train, data.test, cfg, path);
  REQUIRE(metrics.size() == 2);
  for (const auto& m : metrics) {
    CHECK(m.avg_t >= 1.0);
    CHECK(m.avg_t <= 4.0);
    CHECK(m.accuracy >= 0.0);
    CHECK(m.accuracy <= 1.0);
    CHECK(m.beta == doctest::Approx(1.0));
  }

  std::ifstream is(path);
  std::string header;
  std::getline(is, header);
  CHECK(header == "epoch,avg_T,accuracy,mean_reward,beta");
  std::remove(path.c_str());
}

TEST_CASE("zero backbone rate leaves the backbone untouched during finetuning") {
  SyntheticSpec spec;
  spec.n_classes = 2;
  spec.n_per_class = 20;
  spec.height = 8;
  spec.width = 8;
  spec.sigma_easy = Scalar(0.2);
  spec.seed = 31;
  SyntheticData data = make_synthetic(spec);

  Rng rng(32);
  SpikingNetwork net(backbone_arch(), NeuronConfig::training_default(), rng);
  TimestepPolicy policy = make_policy(33);
  std::vector<Array> before;
  for (const auto& p : net.parameters()) before.push_back(p.value());
  std::vector<Array> head_before;
  for (const auto& p : policy.net.parameters()) head_before.push_back(p.value());

  PolicyTrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.lr = Scalar(0.05);
  cfg.backbone_lr = Scalar(0);
  cfg.entropy_bonus = Scalar(0.1);
  cfg.seed = 33;
  train_seenn2(net, policy, data.train, data.test, cfg);

  auto params = net.parameters();
  for (size_t i = 0; i < params.size(); ++i)
    CHECK((params[i].value() == before[i]).all());
  bool head_moved = false;
  auto head = policy.net.parameters();
  for (size_t i = 0; i < head.size(); ++i)
    head_moved = head_moved || !(head[i].value() == head_before[i]).all();
  CHECK(head_moved);
}

TEST_CASE("infer_seenn2 covers every sample with a legal exit time") {
  Rng rng(17);
  SpikingNetwork net(backbone_arch(), NeuronConfig::training_default(), rng);
  TimestepPolicy policy = make_policy(18);

  SyntheticSpec spec;
  spec.height = 8;
  spec.width = 8;
  spec.n_per_class = 10;
  spec.seed = 18;
  SyntheticData data = make_synthetic(spec);

  const auto decisions = infer_seenn2(net, policy, data.test, 7);
  REQUIRE(static_cast<int>(decisions.size()) == data.test.size());
  std::vector<bool> seen(decisions.size(), false);
  for (const auto& d : decisions) {
    CHECK(!seen[d.sample]);
    seen[d.sample] = true;
    CHECK(std::find(policy.candidates.begin(), policy.candidates.end(), d.exit_t) !=
          policy.candidates.end());
  }

  // deterministic evaluation reproduces itself
  const auto again = infer_seenn2(net, policy, data.test, 256);
  for (size_t i = 0; i < decisions.size(); ++i) {
    CHECK(decisions[i].exit_t == again[i].exit_t);
    CHECK(decisions[i].predicted == again[i].predicted);
  }
}

TEST_CASE("policy checkpoint round trip") {
  TimestepPolicy policy = make_policy(19);
  policy.net.set_training(false);
  policy.beta = Scalar(2.5);
  const std::string path = "policy_roundtrip_test.ckpt";
  save_policy(path, policy);
  TimestepPolicy copy = load_policy(path, backbone_arch());
  copy.net.set_training(false);

  CHECK(copy.candidates == policy.candidates);
  CHECK(copy.beta == policy.beta);
  CHECK(copy.downsample == policy.downsample);

  Rng rng(20);
  Tensor x = rng.randn({3, 1, 8, 8});
  Tensor a = policy.probabilities(x);
  Tensor b = copy.probabilities(x);
  CHECK((a.value() == b.value()).all());
  std::remove(path.c_str());
}
