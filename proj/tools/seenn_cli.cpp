#include "seenn/config.hpp"
#include "seenn/conversion.hpp"
#include "seenn/early_exit.hpp"
#include "seenn/efficiency.hpp"
#include "seenn/network.hpp"
#include "seenn/policy.hpp"
#include "seenn/training.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace seenn;

namespace {

RunConfig load_config(const std::string& path) {
  RunConfig cfg = RunConfig::from_file(path);
  if (const char* env = std::getenv("SEENN_SEED")) cfg.seed = std::strtoull(env, nullptr, 10);
  cfg.train.seed = cfg.seed;
  cfg.policy.seed = cfg.seed;
  return cfg;
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.output_dir);
  return (fs::path(cfg.output_dir) / name).string();
}

void snapshot(const RunConfig& cfg, const std::string& cmd) {
  write_effective_config(out_path(cfg, cmd + "_config.txt"), cfg);
}

CorrectnessMatrix full_correctness(SpikingNetwork& net, const Dataset& data, int T,
                                   int batch_size = 256) {
  net.set_training(false);
  CorrectnessMatrix m;
  m.n = data.size();
  m.T = T;
  m.a.assign(static_cast<std::size_t>(m.n) * T, false);
  for (int start = 0; start < data.size(); start += batch_size) {
    std::vector<int> idx;
    for (int i = start; i < std::min(start + batch_size, data.size()); ++i) idx.push_back(i);
    Dataset batch = data.subset(idx);
    TimestepOutputs out = forward_temporal(net, batch.images, T);
    for (int t = 1; t <= T; ++t) {
      const auto pred = predict(out, t);
      for (size_t i = 0; i < idx.size(); ++i) m.set(idx[i], t, pred[i] == batch.labels[i]);
    }
  }
  return m;
}

struct EvalRow {
  std::string mode;
  int timesteps = 0;
  double alpha = 0, beta = 0;
  double accuracy = 0, avg_t = 0;
  double aet_v = 0, empirical_aet_v = 0;
  double energy_j = 0;
  std::vector<int> histogram;  // exit counts at t = 1..timesteps
};

void write_eval_row(const RunConfig& cfg, const EvalRow& r) {
  const std::string csv_path = out_path(cfg, "eval.csv");
  const bool fresh = !fs::exists(csv_path);
  std::ofstream csv(csv_path, std::ios::app);
  if (!csv) throw std::runtime_error("cannot open '" + csv_path + "'");
  if (fresh) {
    csv << "mode,timesteps,alpha,beta,accuracy,avg_t,aet,empirical_aet,energy_j";
    for (int t = 1; t <= r.timesteps; ++t) csv << ",n_exit_t" << t;
    csv << "\n";
  }
  csv.precision(17);
  csv << r.mode << "," << r.timesteps << "," << r.alpha << "," << r.beta << "," << r.accuracy
      << "," << r.avg_t << "," << r.aet_v << "," << r.empirical_aet_v << "," << r.energy_j;
  for (int c : r.histogram) csv << "," << c;
  csv << "\n";

  std::ostringstream js;
  js.precision(17);
  js << "{\"mode\":\"" << r.mode << "\",\"timesteps\":" << r.timesteps << ",\"alpha\":" << r.alpha
     << ",\"beta\":" << r.beta << ",\"accuracy\":" << r.accuracy << ",\"avg_t\":" << r.avg_t
     << ",\"aet\":" << r.aet_v << ",\"empirical_aet\":" << r.empirical_aet_v
     << ",\"energy_j\":" << r.energy_j << ",\"histogram\":{";
  for (int t = 1; t <= r.timesteps; ++t)
    js << (t > 1 ? "," : "") << "\"t" << t << "\":" << r.histogram[t - 1];
  js << "}}";
  std::ofstream jf(out_path(cfg, "eval.json"));
  jf << js.str() << "\n";

  std::cout << js.str() << "\n";
}

int cmd_train(const std::string& config_path, bool quantized) {
  RunConfig cfg = load_config(config_path);
  snapshot(cfg, quantized ? "train_ann" : "train");
  SyntheticData data = cfg.load_data();
  Rng rng(cfg.seed);
  if (quantized) {
    SpikingNetwork ann =
        make_quant_ann(cfg.arch, cfg.arch.quant_steps, NeuronConfig::training_default(), rng);
    train_ann(ann, data.train, data.test, cfg.train, out_path(cfg, "ann_metrics.csv"));
    save_network(out_path(cfg, "ann.ckpt"), ann);
    std::cout << "wrote " << out_path(cfg, "ann.ckpt") << "\n";
  } else {
    SpikingNetwork net(cfg.arch, NeuronConfig::training_default(), rng);
    train(net, data.train, data.test, cfg.train, out_path(cfg, "train_metrics.csv"));
    save_network(out_path(cfg, "snn.ckpt"), net);
    std::cout << "wrote " << out_path(cfg, "snn.ckpt") << "\n";
  }
  return 0;
}

int cmd_convert(const std::string& config_path, const std::string& ann_ckpt) {
  RunConfig cfg = load_config(config_path);
  snapshot(cfg, "convert");
  SpikingNetwork ann = load_network(ann_ckpt);
  ConversionResult result = convert(ann);
  save_network(out_path(cfg, "converted.ckpt"), result.snn);
  std::ofstream js(out_path(cfg, "convert_report.json"));
  js << result.report_json() << "\n";
  std::cout << result.report_json() << "\n";
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& ckpt, const std::string& mode,
             double alpha, double beta, int timesteps, const std::string& policy_ckpt,
             bool force_full) {
  RunConfig cfg = load_config(config_path);
  if (mode == "seenn1" && !force_full && (alpha <= 0 || alpha > 1))
    throw CLI::ValidationError("--alpha", "must be in (0, 1] for seenn1 (or pass --force-full)");
  snapshot(cfg, "eval");
  SyntheticData data = cfg.load_data();
  SpikingNetwork net = load_network(ckpt);
  const int T = timesteps > 0 ? timesteps : cfg.train.T;

  EvalRow row;
  row.mode = mode;
  row.timesteps = T;
  row.alpha = alpha;
  row.beta = beta;
  row.histogram.assign(T, 0);

  const CorrectnessMatrix m = full_correctness(net, data.test, T);
  row.aet_v = aet(m);
  row.empirical_aet_v = empirical_aet(m);
  save_correctness_matrix(out_path(cfg, "correctness.bin"), m);

  OpCounter counter;
  if (mode == "fixed") {
    OpCounter::Scope scope(counter);
    const auto acc = evaluate_per_timestep(net, data.test, T);
    row.accuracy = acc[T - 1];
    row.avg_t = T;
    row.histogram[T - 1] = data.test.size();
  } else if (mode == "seenn1") {
    ExitConfig ec{static_cast<Scalar>(alpha), cfg.effective_exit_candidates()};
    std::vector<ExitDecision> decisions;
    {
      OpCounter::Scope scope(counter);
      decisions = infer_seenn1(net, data.test, ec);
    }
    int correct = 0;
    double t_sum = 0;
    for (const auto& d : decisions) {
      if (d.correct) ++correct;
      t_sum += d.exit_t;
      ++row.histogram[d.exit_t - 1];
    }
    row.accuracy = static_cast<double>(correct) / decisions.size();
    row.avg_t = t_sum / decisions.size();
  } else if (mode == "seenn2") {
    if (policy_ckpt.empty())
      throw CLI::ValidationError("--policy", "required for seenn2 mode");
    TimestepPolicy policy = load_policy(policy_ckpt, net.arch());
    policy.beta = static_cast<Scalar>(beta);
    std::vector<ExitDecision> decisions;
    {
      OpCounter::Scope scope(counter);
      decisions = infer_seenn2(net, policy, data.test);
    }
    int correct = 0;
    double t_sum = 0;
    for (const auto& d : decisions) {
      if (d.correct) ++correct;
      t_sum += d.exit_t;
      ++row.histogram[d.exit_t - 1];
    }
    row.accuracy = static_cast<double>(correct) / decisions.size();
    row.avg_t = t_sum / decisions.size();
  } else {
    throw CLI::ValidationError("--mode", "must be fixed, seenn1 or seenn2");
  }
  row.energy_j = estimate_energy(counter.report(cfg.energy), cfg.energy);
  write_eval_row(cfg, row);
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& ckpt,
              const std::string& alphas_arg) {
  RunConfig cfg = load_config(config_path);
  snapshot(cfg, "sweep");
  SyntheticData data = cfg.load_data();
  SpikingNetwork net = load_network(ckpt);

  std::vector<Scalar> alphas;
  std::istringstream is(alphas_arg);
  std::string tok;
  while (std::getline(is, tok, ',')) alphas.push_back(static_cast<Scalar>(std::stod(tok)));
  if (alphas.empty()) throw CLI::ValidationError("--alphas", "empty alpha list");

  const auto candidates = cfg.effective_exit_candidates();
  const auto rows = sweep_alpha(net, data.test, alphas, candidates);
  write_sweep_csv(out_path(cfg, "sweep.csv"), rows, candidates);
  std::ofstream js(out_path(cfg, "sweep.json"));
  js << sweep_json(rows, candidates) << "\n";

  const CorrectnessMatrix m = full_correctness(net, data.test, candidates.back());
  save_correctness_matrix(out_path(cfg, "correctness.bin"), m);
  std::cout << sweep_json(rows, candidates) << "\n";
  return 0;
}

int cmd_policy_train(const std::string& config_path, const std::string& ckpt) {
  RunConfig cfg = load_config(config_path);
  snapshot(cfg, "policy_train");
  SyntheticData data = cfg.load_data();
  SpikingNetwork net = load_network(ckpt);
  Rng rng(cfg.seed);
  TimestepPolicy policy(cfg.policy_arch(), cfg.effective_policy_candidates(), cfg.policy_beta,
                        cfg.policy_downsample, net.arch(), rng);
  train_seenn2(net, policy, data.train, data.test, cfg.policy,
               out_path(cfg, "policy_metrics.csv"));
  save_network(out_path(cfg, "finetuned.ckpt"), net);
  save_policy(out_path(cfg, "policy.ckpt"), policy);
  std::cout << "wrote " << out_path(cfg, "policy.ckpt") << "\n";
  return 0;
}

int cmd_policy_eval(const std::string& config_path, const std::string& ckpt,
                    const std::string& policy_ckpt) {
  return cmd_eval(config_path, ckpt, "seenn2", 0, 1, 0, policy_ckpt, false);
}

int cmd_report(const std::string& config_path, const std::string& ckpt) {
  RunConfig cfg = load_config(config_path);
  snapshot(cfg, "report");
  SpikingNetwork net = load_network(ckpt);

  const StaticOpCount backbone = count_static_ops(net.arch());
  const StaticOpCount head = count_static_ops(cfg.policy_arch());
  const double ratio =
      static_cast<double>(head.total_macs) / static_cast<double>(backbone.total_macs);

  std::ostringstream js;
  js.precision(17);
  js << "{\"backbone_static_macs\":" << backbone.total_macs
     << ",\"policy_static_macs\":" << head.total_macs << ",\"policy_ratio\":" << ratio
     << ",\"layers\":[";
  for (size_t i = 0; i < backbone.layers.size(); ++i) {
    if (i) js << ",";
    js << "{\"name\":\"" << backbone.layers[i].name << "\",\"macs\":" << backbone.layers[i].macs
       << "}";
  }
  js << "]}";
  std::ofstream jf(out_path(cfg, "report.json"));
  jf << js.str() << "\n";

  std::ofstream csv(out_path(cfg, "report.csv"));
  csv << "name,macs\n";
  for (const auto& l : backbone.layers) csv << l.name << "," << l.macs << "\n";

  std::cout << js.str() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal early-exit SNN toolkit"};
  app.require_subcommand(1);

  std::string config_path, ckpt, policy_ckpt, mode = "fixed", alphas_arg;
  double alpha = 0.9, beta = 1.0;
  int timesteps = 0;
  bool force_full = false, quantized = false;

  auto* train_cmd = app.add_subcommand("train", "Train a backbone from scratch");
  train_cmd->add_option("--config", config_path, "Run config file")->required();
  train_cmd->add_flag("--quantized", quantized, "Train the quantized ANN used for conversion");

  auto* convert_cmd = app.add_subcommand("convert", "Convert a quantized ANN to an SNN");
  convert_cmd->add_option("--config", config_path)->required();
  convert_cmd->add_option("--ckpt", ckpt, "Quantized ANN checkpoint")->required();

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--config", config_path)->required();
  eval_cmd->add_option("--ckpt", ckpt)->required();
  eval_cmd->add_option("--mode", mode, "fixed | seenn1 | seenn2");
  eval_cmd->add_option("--alpha", alpha, "Confidence threshold (seenn1)");
  eval_cmd->add_option("--beta", beta, "Incorrect-exit penalty (seenn2)");
  eval_cmd->add_option("--timesteps", timesteps, "Override timestep budget");
  eval_cmd->add_option("--policy", policy_ckpt, "Policy checkpoint (seenn2)");
  eval_cmd->add_flag("--force-full", force_full, "Permit alpha > 1 (forces full-T inference)");

  auto* sweep_cmd = app.add_subcommand("sweep", "Threshold sweep over alpha values");
  sweep_cmd->add_option("--config", config_path)->required();
  sweep_cmd->add_option("--ckpt", ckpt)->required();
  sweep_cmd->add_option("--alphas", alphas_arg, "Comma-separated alpha list")->required();

  auto* ptrain_cmd = app.add_subcommand("policy-train", "Joint policy + backbone finetuning");
  ptrain_cmd->add_option("--config", config_path)->required();
  ptrain_cmd->add_option("--ckpt", ckpt, "Pretrained backbone checkpoint")->required();

  auto* peval_cmd = app.add_subcommand("policy-eval", "Deterministic policy evaluation");
  peval_cmd->add_option("--config", config_path)->required();
  peval_cmd->add_option("--ckpt", ckpt)->required();
  peval_cmd->add_option("--policy", policy_ckpt)->required();

  auto* report_cmd = app.add_subcommand("report", "Static operation-count report");
  report_cmd->add_option("--config", config_path)->required();
  report_cmd->add_option("--ckpt", ckpt)->required();

  try {
    app.parse(argc, argv);
    if (train_cmd->parsed()) return cmd_train(config_path, quantized);
    if (convert_cmd->parsed()) return cmd_convert(config_path, ckpt);
    if (eval_cmd->parsed())
      return cmd_eval(config_path, ckpt, mode, alpha, beta, timesteps, policy_ckpt, force_full);
    if (sweep_cmd->parsed()) return cmd_sweep(config_path, ckpt, alphas_arg);
    if (ptrain_cmd->parsed()) return cmd_policy_train(config_path, ckpt);
    if (peval_cmd->parsed()) return cmd_policy_eval(config_path, ckpt, policy_ckpt);
    if (report_cmd->parsed()) return cmd_report(config_path, ckpt);
    std::cerr << "error: no subcommand\n";
    return 2;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
