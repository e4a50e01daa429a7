#include "seenn/config.hpp"

#include <fstream>
#include <sstream>

namespace seenn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(std::stoi(tok));
  }
  return out;
}

std::vector<std::string> parse_str_list(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument("config: bad boolean '" + s + "' for key '" + key + "'");
}

std::string join(const std::vector<int>& v) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::string join(const std::vector<std::string>& v) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

[[noreturn]] void unknown_key(const std::string& section, const std::string& key) {
  throw std::invalid_argument("config: unknown key '" + key + "' in section [" + section + "]");
}

void apply(RunConfig& c, const std::string& sec, const std::string& key, const std::string& val) {
  if (sec.empty()) {
    if (key == "seed")
      c.seed = std::stoull(val);
    else if (key == "output_dir")
      c.output_dir = val;
    else
      unknown_key("<top>", key);
  } else if (sec == "arch") {
    if (key == "kind") {
      if (val == "resnet")
        c.arch.kind = ArchConfig::Kind::Resnet;
      else if (val == "mlp")
        c.arch.kind = ArchConfig::Kind::Mlp;
      else
        throw std::invalid_argument("config: arch.kind must be resnet or mlp, got '" + val + "'");
    } else if (key == "in_channels")
      c.arch.in_channels = std::stoi(val);
    else if (key == "in_h")
      c.arch.in_h = std::stoi(val);
    else if (key == "in_w")
      c.arch.in_w = std::stoi(val);
    else if (key == "num_classes")
      c.arch.num_classes = std::stoi(val);
    else if (key == "stem_channels")
      c.arch.stem_channels = std::stoi(val);
    else if (key == "stage_channels")
      c.arch.stage_channels = parse_int_list(val);
    else if (key == "blocks_per_stage")
      c.arch.blocks_per_stage = std::stoi(val);
    else if (key == "hidden")
      c.arch.hidden = parse_int_list(val);
    else if (key == "quant_steps")
      c.arch.quant_steps = std::stoi(val);
    else if (key == "stochastic_input")
      c.arch.stochastic_input = std::stoi(val) != 0;
    else
      unknown_key(sec, key);
  } else if (sec == "train") {
    if (key == "epochs")
      c.train.epochs = std::stoi(val);
    else if (key == "batch_size")
      c.train.batch_size = std::stoi(val);
    else if (key == "lr0")
      c.train.lr0 = static_cast<Scalar>(std::stod(val));
    else if (key == "momentum")
      c.train.momentum = static_cast<Scalar>(std::stod(val));
    else if (key == "weight_decay")
      c.train.weight_decay = static_cast<Scalar>(std::stod(val));
    else if (key == "timesteps")
      c.train.T = std::stoi(val);
    else if (key == "loss") {
      if (val == "tet")
        c.train.loss_mode = LossMode::TET;
      else if (val == "last_step_ce")
        c.train.loss_mode = LossMode::LastStepCE;
      else
        throw std::invalid_argument("config: train.loss must be tet or last_step_ce, got '" +
                                    val + "'");
    } else if (key == "candidates")
      c.train.candidates = parse_int_list(val);
    else
      unknown_key(sec, key);
  } else if (sec == "exit") {
    if (key == "alpha")
      c.exit_alpha = static_cast<Scalar>(std::stod(val));
    else if (key == "candidates")
      c.exit_candidates = parse_int_list(val);
    else
      unknown_key(sec, key);
  } else if (sec == "policy") {
    if (key == "epochs")
      c.policy.epochs = std::stoi(val);
    else if (key == "batch_size")
      c.policy.batch_size = std::stoi(val);
    else if (key == "lr")
      c.policy.lr = static_cast<Scalar>(std::stod(val));
    else if (key == "backbone_lr")
      c.policy.backbone_lr = static_cast<Scalar>(std::stod(val));
    else if (key == "entropy_bonus")
      c.policy.entropy_bonus = static_cast<Scalar>(std::stod(val));
    else if (key == "momentum")
      c.policy.momentum = static_cast<Scalar>(std::stod(val));
    else if (key == "weight_decay")
      c.policy.weight_decay = static_cast<Scalar>(std::stod(val));
    else if (key == "beta")
      c.policy_beta = static_cast<Scalar>(std::stod(val));
    else if (key == "downsample")
      c.policy_downsample = std::stoi(val);
    else if (key == "candidates")
      c.policy_candidates = parse_int_list(val);
    else if (key == "hidden")
      c.policy_hidden = parse_int_list(val);
    else
      unknown_key(sec, key);
  } else if (sec == "data") {
    if (key == "source") {
      if (val != "synthetic" && val != "idx" && val != "cifar10")
        throw std::invalid_argument("config: data.source must be synthetic, idx or cifar10");
      c.data_source = val;
    } else if (key == "images")
      c.data_images = val;
    else if (key == "labels")
      c.data_labels = val;
    else if (key == "test_images")
      c.data_test_images = val;
    else if (key == "test_labels")
      c.data_test_labels = val;
    else if (key == "cifar_batches")
      c.data_cifar = parse_str_list(val);
    else if (key == "cifar_test_batches")
      c.data_cifar_test = parse_str_list(val);
    else if (key == "limit")
      c.data_limit = std::stoi(val);
    else if (key == "standardize")
      c.data_standardize = parse_bool(val, key);
    else if (key == "n_classes")
      c.synth.n_classes = std::stoi(val);
    else if (key == "n_per_class")
      c.synth.n_per_class = std::stoi(val);
    else if (key == "channels")
      c.synth.channels = std::stoi(val);
    else if (key == "height")
      c.synth.height = std::stoi(val);
    else if (key == "width")
      c.synth.width = std::stoi(val);
    else if (key == "scale")
      c.synth.scale = static_cast<Scalar>(std::stod(val));
    else if (key == "sigma_easy")
      c.synth.sigma_easy = static_cast<Scalar>(std::stod(val));
    else if (key == "sigma_hard")
      c.synth.sigma_hard = static_cast<Scalar>(std::stod(val));
    else if (key == "hard_fraction")
      c.synth.hard_fraction = static_cast<Scalar>(std::stod(val));
    else if (key == "hard_contrast")
      c.synth.hard_contrast = static_cast<Scalar>(std::stod(val));
    else if (key == "hard_mix")
      c.synth.hard_mix = static_cast<Scalar>(std::stod(val));
    else if (key == "data_seed")
      c.synth.seed = std::stoull(val);
    else
      unknown_key(sec, key);
  } else if (sec == "efficiency") {
    if (key == "e_mac")
      c.energy.e_mac = std::stod(val);
    else if (key == "e_ac")
      c.energy.e_ac = std::stod(val);
    else
      unknown_key(sec, key);
  } else {
    throw std::invalid_argument("config: unknown section [" + sec + "]");
  }
}

}  // namespace

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig c;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::invalid_argument("config: malformed section header at line " +
                                    std::to_string(lineno));
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: expected key=value at line " + std::to_string(lineno));
    apply(c, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return from_text(buf.str());
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "seed=" << seed << "\n";
  os << "output_dir=" << output_dir << "\n\n";

  os << "[arch]\n";
  os << "kind=" << (arch.kind == ArchConfig::Kind::Resnet ? "resnet" : "mlp") << "\n";
  os << "in_channels=" << arch.in_channels << "\n";
  os << "in_h=" << arch.in_h << "\n";
  os << "in_w=" << arch.in_w << "\n";
  os << "num_classes=" << arch.num_classes << "\n";
  os << "stem_channels=" << arch.stem_channels << "\n";
  os << "stage_channels=" << join(arch.stage_channels) << "\n";
  os << "blocks_per_stage=" << arch.blocks_per_stage << "\n";
  os << "hidden=" << join(arch.hidden) << "\n";
  os << "quant_steps=" << arch.quant_steps << "\n";
  os << "stochastic_input=" << (arch.stochastic_input ? 1 : 0) << "\n\n";

  os << "[train]\n";
  os << "epochs=" << train.epochs << "\n";
  os << "batch_size=" << train.batch_size << "\n";
  os << "lr0=" << train.lr0 << "\n";
  os << "momentum=" << train.momentum << "\n";
  os << "weight_decay=" << train.weight_decay << "\n";
  os << "timesteps=" << train.T << "\n";
  os << "loss=" << (train.loss_mode == LossMode::TET ? "tet" : "last_step_ce") << "\n";
  os << "candidates=" << join(train.candidates) << "\n\n";

  os << "[exit]\n";
  os << "alpha=" << exit_alpha << "\n";
  os << "candidates=" << join(effective_exit_candidates()) << "\n\n";

  os << "[policy]\n";
  os << "epochs=" << policy.epochs << "\n";
  os << "batch_size=" << policy.batch_size << "\n";
  os << "lr=" << policy.lr << "\n";
  os << "backbone_lr=" << policy.backbone_lr << "\n";
  os << "entropy_bonus=" << policy.entropy_bonus << "\n";
  os << "momentum=" << policy.momentum << "\n";
  os << "weight_decay=" << policy.weight_decay << "\n";
  os << "beta=" << policy_beta << "\n";
  os << "downsample=" << policy_downsample << "\n";
  os << "candidates=" << join(effective_policy_candidates()) << "\n";
  os << "hidden=" << join(policy_hidden) << "\n\n";

  os << "[data]\n";
  os << "source=" << data_source << "\n";
  os << "images=" << data_images << "\n";
  os << "labels=" << data_labels << "\n";
  os << "test_images=" << data_test_images << "\n";
  os << "test_labels=" << data_test_labels << "\n";
  os << "cifar_batches=" << join(data_cifar) << "\n";
  os << "cifar_test_batches=" << join(data_cifar_test) << "\n";
  os << "limit=" << data_limit << "\n";
  os << "standardize=" << (data_standardize ? "true" : "false") << "\n";
  os << "n_classes=" << synth.n_classes << "\n";
  os << "n_per_class=" << synth.n_per_class << "\n";
  os << "channels=" << synth.channels << "\n";
  os << "height=" << synth.height << "\n";
  os << "width=" << synth.width << "\n";
  os << "scale=" << synth.scale << "\n";
  os << "sigma_easy=" << synth.sigma_easy << "\n";
  os << "sigma_hard=" << synth.sigma_hard << "\n";
  os << "hard_fraction=" << synth.hard_fraction << "\n";
  os << "hard_contrast=" << synth.hard_contrast << "\n";
  os << "hard_mix=" << synth.hard_mix << "\n";
  os << "data_seed=" << synth.seed << "\n\n";

  os << "[efficiency]\n";
  os << "e_mac=" << energy.e_mac << "\n";
  os << "e_ac=" << energy.e_ac << "\n";
  return os.str();
}

std::vector<int> RunConfig::effective_exit_candidates() const {
  if (!exit_candidates.empty()) return exit_candidates;
  std::vector<int> c;
  for (int t = 1; t <= train.T; ++t) c.push_back(t);
  return c;
}

std::vector<int> RunConfig::effective_policy_candidates() const {
  if (!policy_candidates.empty()) return policy_candidates;
  std::vector<int> c;
  for (int t = 1; t <= train.T; ++t) c.push_back(t);
  return c;
}

ArchConfig RunConfig::policy_arch() const {
  ArchConfig pa;
  pa.kind = ArchConfig::Kind::Mlp;
  pa.hidden = policy_hidden;
  pa.relu_ann = true;
  pa.in_channels = arch.in_channels;
  pa.in_h = arch.in_h / policy_downsample;
  pa.in_w = arch.in_w / policy_downsample;
  pa.num_classes = static_cast<int>(effective_policy_candidates().size());
  return pa;
}

SyntheticData RunConfig::load_data() const {
  SyntheticData d;
  if (data_source == "synthetic") {
    d = make_synthetic(synth);
  } else if (data_source == "idx") {
    if (data_images.empty() || data_labels.empty())
      throw std::invalid_argument("config: data.images/data.labels required for idx source");
    d.train = load_idx(data_images, data_labels);
    d.test = (!data_test_images.empty() && !data_test_labels.empty())
                 ? load_idx(data_test_images, data_test_labels)
                 : d.train;
    d.test.split = "test";
  } else if (data_source == "cifar10") {
    if (data_cifar.empty())
      throw std::invalid_argument("config: data.cifar_batches required for cifar10 source");
    d.train = load_cifar10_bin(data_cifar);
    d.test = data_cifar_test.empty() ? d.train : load_cifar10_bin(data_cifar_test);
    d.test.split = "test";
  } else {
    throw std::invalid_argument("config: unknown data source '" + data_source + "'");
  }
  if (data_limit > 0) {
    d.train = d.train.head(data_limit);
    d.test = d.test.head(data_limit);
    d.train_hard.resize(std::min<std::size_t>(d.train_hard.size(), d.train.size()));
    d.test_hard.resize(std::min<std::size_t>(d.test_hard.size(), d.test.size()));
  }
  if (data_standardize && data_source != "synthetic") {
    const ChannelStats stats = compute_channel_stats(d.train);
    standardize(d.train, stats);
    standardize(d.test, stats);
  }
  return d;
}

void write_effective_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path + "'");
  os << cfg.to_text();
}

}  // namespace seenn
