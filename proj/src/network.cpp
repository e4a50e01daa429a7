#include "seenn/network.hpp"

#include <cstring>
#include <fstream>

namespace seenn {

thread_local Tape* Tape::active_ = nullptr;
thread_local OpCounter* OpCounter::active_ = nullptr;

Rng& global_rng() {
  static Rng rng(0);
  return rng;
}

// ---------------------------------------------------------------------------
// ArchConfig text form
// ---------------------------------------------------------------------------

namespace {

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(std::stoi(tok));
  return out;
}

}  // namespace

std::string ArchConfig::to_text() const {
  std::ostringstream os;
  os << "kind=" << (kind == Kind::Resnet ? "resnet" : "mlp") << "\n"
     << "in_channels=" << in_channels << "\n"
     << "in_h=" << in_h << "\n"
     << "in_w=" << in_w << "\n"
     << "num_classes=" << num_classes << "\n"
     << "stem_channels=" << stem_channels << "\n"
     << "stage_channels=" << join_ints(stage_channels) << "\n"
     << "blocks_per_stage=" << blocks_per_stage << "\n"
     << "hidden=" << join_ints(hidden) << "\n"
     << "quantized_ann=" << (quantized_ann ? 1 : 0) << "\n"
     << "quant_steps=" << quant_steps << "\n"
     << "relu_ann=" << (relu_ann ? 1 : 0) << "\n"
     << "stochastic_input=" << (stochastic_input ? 1 : 0) << "\n";
  return os.str();
}

ArchConfig ArchConfig::from_text(const std::string& text) {
  ArchConfig a;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("arch config: bad line '" + line + "'");
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "kind")
      a.kind = (val == "mlp") ? Kind::Mlp : Kind::Resnet;
    else if (key == "in_channels")
      a.in_channels = std::stoi(val);
    else if (key == "in_h")
      a.in_h = std::stoi(val);
    else if (key == "in_w")
      a.in_w = std::stoi(val);
    else if (key == "num_classes")
      a.num_classes = std::stoi(val);
    else if (key == "stem_channels")
      a.stem_channels = std::stoi(val);
    else if (key == "stage_channels")
      a.stage_channels = split_ints(val);
    else if (key == "blocks_per_stage")
      a.blocks_per_stage = std::stoi(val);
    else if (key == "hidden")
      a.hidden = split_ints(val);
    else if (key == "quantized_ann")
      a.quantized_ann = std::stoi(val) != 0;
    else if (key == "quant_steps")
      a.quant_steps = std::stoi(val);
    else if (key == "relu_ann")
      a.relu_ann = std::stoi(val) != 0;
    else if (key == "stochastic_input")
      a.stochastic_input = std::stoi(val) != 0;
    else
      throw std::runtime_error("arch config: unknown key '" + key + "'");
  }
  return a;
}

// ---------------------------------------------------------------------------
// construction
// ---------------------------------------------------------------------------

namespace {

Tensor kaiming_conv(Rng& rng, int f, int c, int kh, int kw) {
  const double std = std::sqrt(2.0 / (c * kh * kw));
  return rng.randn({f, c, kh, kw}, std, true);
}

Tensor kaiming_linear(Rng& rng, int in, int out) {
  const double std = std::sqrt(2.0 / in);
  return rng.randn({in, out}, std, true);
}

BnLayer make_bn(int features) {
  BnLayer bn;
  bn.gamma = Tensor::full({features}, Scalar(1), true);
  bn.beta = Tensor::zeros({features}, true);
  bn.running_mean = Tensor::zeros({features});
  bn.running_var = Tensor::full({features}, Scalar(1));
  return bn;
}

}  // namespace

SpikingNetwork::SpikingNetwork(const ArchConfig& arch, const NeuronConfig& neuron, Rng& rng)
    : arch_(arch), neuron_(neuron) {
  if (arch.kind == ArchConfig::Kind::Resnet) {
    // ANN modes (relu or quantized) carry analog values everywhere; only the
    // spiking network has binary inter-layer traffic
    const bool analog = arch.relu_ann || arch.quantized_ann;
    stem_ = ConvLayer{"stem.conv", kaiming_conv(rng, arch.stem_channels, arch.in_channels, 3, 3),
                      1, 1, /*analog_input=*/true};
    stem_bn_ = make_bn(arch.stem_channels);
    stem_lif_ = LifLayer{neuron, {}};
    int in_ch = arch.stem_channels;
    for (size_t s = 0; s < arch.stage_channels.size(); ++s) {
      const int out_ch = arch.stage_channels[s];
      for (int b = 0; b < arch.blocks_per_stage; ++b) {
        const bool downsample = (s > 0 && b == 0);
        const bool project = downsample || in_ch != out_ch;
        const std::string prefix =
            "stage" + std::to_string(s) + ".block" + std::to_string(b) + ".";
        ResidualBlock blk;
        blk.pool = downsample ? 2 : 1;  // avg-pool downsampling keeps conv shapes exact
        blk.conv1 =
            ConvLayer{prefix + "conv1", kaiming_conv(rng, out_ch, in_ch, 3, 3), 1, 1, analog};
        blk.bn1 = make_bn(out_ch);
        blk.lif1 = LifLayer{neuron, {}};
        blk.conv2 =
            ConvLayer{prefix + "conv2", kaiming_conv(rng, out_ch, out_ch, 3, 3), 1, 1, analog};
        blk.bn2 = make_bn(out_ch);
        blk.lif2 = LifLayer{neuron, {}};
        if (project) {
          blk.shortcut_conv = ConvLayer{prefix + "shortcut.conv",
                                        kaiming_conv(rng, out_ch, in_ch, 1, 1), 1, 0, analog};
          blk.shortcut_bn = make_bn(out_ch);
        }
        blocks_.push_back(std::move(blk));
        in_ch = out_ch;
      }
    }
    classifier_ = LinearLayer{"classifier", kaiming_linear(rng, in_ch, arch.num_classes),
                              Tensor::zeros({arch.num_classes}, true), true};
  } else {
    const bool analog = arch.relu_ann || arch.quantized_ann;
    int in_dim = arch.input_dim();
    for (size_t i = 0; i < arch.hidden.size(); ++i) {
      const std::string prefix = "mlp.block" + std::to_string(i) + ".";
      MlpBlock blk;
      blk.linear = LinearLayer{prefix + "linear", kaiming_linear(rng, in_dim, arch.hidden[i]),
                               Tensor::zeros({arch.hidden[i]}, true), analog || i == 0};
      blk.bn = make_bn(arch.hidden[i]);
      blk.lif = LifLayer{neuron, {}};
      mlp_blocks_.push_back(std::move(blk));
      in_dim = arch.hidden[i];
    }
    classifier_ = LinearLayer{"classifier", kaiming_linear(rng, in_dim, arch.num_classes),
                              Tensor::zeros({arch.num_classes}, true), true};
  }
  for (auto* l : lif_layers()) l->lambda = Tensor::full({1}, Scalar(4), arch.quantized_ann);
}

// ---------------------------------------------------------------------------
// forward
// ---------------------------------------------------------------------------

Tensor SpikingNetwork::activate(LifLayer& lif, Tensor current) {
  if (arch_.relu_ann) return relu(current);
  if (!arch_.quantized_ann) return lif.forward(current);
  if (training_ && !lif.lambda_set) {
    // warm start: 8x the mean positive pre-activation of the first batch
    const Scalar mean_pos = current.value().max(Scalar(0)).mean();
    lif.lambda.value()[0] = std::max(Scalar(8) * mean_pos, Scalar(1e-3));
    lif.lambda_set = true;
  }
  return quant_act(current, lif.lambda, arch_.quant_steps);
}

Tensor SpikingNetwork::step(Tensor x) {
  if (arch_.stochastic_input) {
    // spike with probability min(|x|,1), carrying the sign; the draw is a
    // data leaf, so gradients w.r.t. the weights are unaffected
    Array enc(x.size());
    for (std::int64_t i = 0; i < x.size(); ++i) {
      const Scalar v = x.value()[i];
      const Scalar p = std::min(std::abs(v), Scalar(1));
      enc[i] = enc_rng_.uniform() < p ? (v < 0 ? Scalar(-1) : Scalar(1)) : Scalar(0);
    }
    x = Tensor(x.shape(), std::move(enc), false);
  }
  Tensor feat;
  if (arch_.kind == ArchConfig::Kind::Resnet) {
    Tensor s = activate(stem_lif_, stem_bn_.forward(stem_.forward(x), training_));
    for (auto& blk : blocks_) {
      Tensor in = blk.pool > 1 ? avg_pool2d(s, blk.pool) : s;
      Tensor pre = blk.bn2.forward(
          blk.conv2.forward(activate(blk.lif1, blk.bn1.forward(blk.conv1.forward(in), training_))),
          training_);
      Tensor sc = blk.shortcut_conv
                      ? blk.shortcut_bn->forward(blk.shortcut_conv->forward(in), training_)
                      : in;
      s = activate(blk.lif2, add(pre, sc));
    }
    feat = global_avg_pool(s);
  } else {
    Tensor h = reshape(x, {x.dim(0), arch_.input_dim()});
    for (auto& blk : mlp_blocks_)
      h = activate(blk.lif, blk.bn.forward(blk.linear.forward(h), training_));
    feat = h;
  }
  Tensor logits = classifier_.forward(feat);
  logit_sum_ = steps_done_ == 0 ? logits : add(logit_sum_, logits);
  ++steps_done_;
  return logits;
}

void SpikingNetwork::reset_states() {
  for (auto* l : lif_layers()) l->reset();
  logit_sum_ = Tensor();
  steps_done_ = 0;
  enc_rng_.reseed(kEncodeSeed);
}

void SpikingNetwork::compact_states(const std::vector<int>& keep) {
  for (auto* l : lif_layers()) l->compact(keep);
  if (logit_sum_.defined()) logit_sum_ = gather_rows(logit_sum_, keep);
}

void SpikingNetwork::forward_more(const Tensor& x, int extra, TimestepOutputs& out) {
  for (int i = 0; i < extra; ++i) {
    step(x);
    out.accumulated.push_back(scale(logit_sum_, Scalar(1) / steps_done_));
  }
}

TimestepOutputs forward_temporal(SpikingNetwork& net, const Tensor& x, int T) {
  if (T < 1) throw std::invalid_argument("forward_temporal: T must be >= 1");
  net.reset_states();
  TimestepOutputs out;
  net.forward_more(x, T, out);
  return out;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const int n = logits.dim(0), m = logits.dim(1);
  std::vector<int> pred(n);
  for (int i = 0; i < n; ++i) {
    int best = 0;
    for (int j = 1; j < m; ++j)
      if (logits.value()[static_cast<std::int64_t>(i) * m + j] >
          logits.value()[static_cast<std::int64_t>(i) * m + best])
        best = j;
    pred[i] = best;
  }
  return pred;
}

std::vector<int> predict(const TimestepOutputs& outputs, int t) { return argmax_rows(outputs.at(t)); }

// ---------------------------------------------------------------------------
// parameter enumeration
// ---------------------------------------------------------------------------

std::vector<LifLayer*> SpikingNetwork::lif_layers() {
  std::vector<LifLayer*> out;
  if (arch_.kind == ArchConfig::Kind::Resnet) {
    out.push_back(&stem_lif_);
    for (auto& blk : blocks_) {
      out.push_back(&blk.lif1);
      out.push_back(&blk.lif2);
    }
  } else {
    for (auto& blk : mlp_blocks_) out.push_back(&blk.lif);
  }
  return out;
}

std::vector<ConvLayer*> SpikingNetwork::conv_layers() {
  std::vector<ConvLayer*> out;
  if (arch_.kind == ArchConfig::Kind::Resnet) {
    out.push_back(&stem_);
    for (auto& blk : blocks_) {
      out.push_back(&blk.conv1);
      out.push_back(&blk.conv2);
      if (blk.shortcut_conv) out.push_back(&*blk.shortcut_conv);
    }
  }
  return out;
}

namespace {
void push_bn(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
             BnLayer& bn) {
  out.emplace_back(prefix + ".gamma", bn.gamma);
  out.emplace_back(prefix + ".beta", bn.beta);
  out.emplace_back(prefix + ".running_mean", bn.running_mean);
  out.emplace_back(prefix + ".running_var", bn.running_var);
}
}  // namespace

std::vector<std::pair<std::string, Tensor>> SpikingNetwork::named_tensors() {
  std::vector<std::pair<std::string, Tensor>> out;
  if (arch_.kind == ArchConfig::Kind::Resnet) {
    out.emplace_back("stem.conv.w", stem_.w);
    push_bn(out, "stem.bn", stem_bn_);
    for (size_t i = 0; i < blocks_.size(); ++i) {
      auto& blk = blocks_[i];
      const std::string p = "block" + std::to_string(i);
      out.emplace_back(p + ".conv1.w", blk.conv1.w);
      push_bn(out, p + ".bn1", blk.bn1);
      out.emplace_back(p + ".conv2.w", blk.conv2.w);
      push_bn(out, p + ".bn2", blk.bn2);
      if (blk.shortcut_conv) {
        out.emplace_back(p + ".shortcut.conv.w", blk.shortcut_conv->w);
        push_bn(out, p + ".shortcut.bn", *blk.shortcut_bn);
      }
    }
  } else {
    for (size_t i = 0; i < mlp_blocks_.size(); ++i) {
      auto& blk = mlp_blocks_[i];
      const std::string p = "mlp.block" + std::to_string(i);
      out.emplace_back(p + ".linear.w", blk.linear.w);
      out.emplace_back(p + ".linear.b", blk.linear.b);
      push_bn(out, p + ".bn", blk.bn);
    }
  }
  out.emplace_back("classifier.w", classifier_.w);
  out.emplace_back("classifier.b", classifier_.b);
  // per-layer neuron configuration travels with the weights
  auto lifs = lif_layers();
  Array th(lifs.size()), ic(lifs.size());
  for (size_t i = 0; i < lifs.size(); ++i) {
    th[i] = lifs[i]->cfg.threshold;
    ic[i] = lifs[i]->cfg.init_charge;
  }
  out.emplace_back("lif.thresholds", Tensor({static_cast<int>(lifs.size())}, th));
  out.emplace_back("lif.init_charge", Tensor({static_cast<int>(lifs.size())}, ic));
  Array misc(2);
  misc[0] = neuron_.tau;
  misc[1] = neuron_.reset == ResetMode::SubtractReset ? 1 : 0;
  out.emplace_back("lif.tau_reset", Tensor({2}, misc));
  for (size_t i = 0; i < lifs.size(); ++i)
    out.emplace_back("lif" + std::to_string(i) + ".lambda", lifs[i]->lambda);
  return out;
}

std::vector<Tensor> SpikingNetwork::parameters() {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_tensors())
    if (t.requires_grad()) out.push_back(t);
  return out;
}

// ---------------------------------------------------------------------------
// checkpoint I/O
// ---------------------------------------------------------------------------

namespace {

template <typename T>
void write_raw(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

constexpr std::uint32_t kFormatVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, const std::string& arch_text,
                     std::vector<std::pair<std::string, Tensor>> tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  os.write("SEEN", 4);
  write_raw<std::uint32_t>(os, kFormatVersion);
  write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(arch_text.size()));
  os.write(arch_text.data(), static_cast<std::streamsize>(arch_text.size()));
  for (auto& [name, t] : tensors) {
    write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_raw<std::uint8_t>(os, sizeof(Scalar) == 8 ? 0 : 1);  // dtype tag: 0=f64, 1=f32
    write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) write_raw<std::uint64_t>(os, static_cast<std::uint64_t>(d));
    os.write(reinterpret_cast<const char*>(t.value().data()),
             static_cast<std::streamsize>(t.size() * sizeof(Scalar)));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SEEN", 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
  const auto version = read_raw<std::uint32_t>(is);
  if (version != kFormatVersion)
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version));
  Checkpoint ckpt;
  const auto arch_len = read_raw<std::uint32_t>(is);
  ckpt.arch_text.resize(arch_len);
  is.read(ckpt.arch_text.data(), arch_len);
  while (true) {
    std::uint32_t name_len;
    is.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
    if (is.eof()) break;
    if (!is) throw std::runtime_error("checkpoint: truncated tensor header");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const auto dtype = read_raw<std::uint8_t>(is);
    if (dtype != (sizeof(Scalar) == 8 ? 0 : 1))
      throw std::runtime_error("checkpoint: dtype mismatch for tensor '" + name + "'");
    const auto rank = read_raw<std::uint32_t>(is);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<int>(read_raw<std::uint64_t>(is));
    Array v(shape_size(shape));
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(Scalar)));
    if (!is) throw std::runtime_error("checkpoint: truncated data for tensor '" + name + "'");
    ckpt.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(v)));
  }
  return ckpt;
}

const Tensor& Checkpoint::find(const std::string& name) const {
  for (auto& [n, t] : tensors)
    if (n == name) return t;
  throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
}

void save_network(const std::string& path, SpikingNetwork& net, const std::string& extra) {
  std::string text = net.arch().to_text();
  if (!extra.empty()) text += "#extra\n" + extra;
  save_checkpoint(path, text, net.named_tensors());
}

SpikingNetwork load_network(const std::string& path, std::string* extra) {
  Checkpoint ckpt = load_checkpoint(path);
  std::string arch_text = ckpt.arch_text;
  if (const auto pos = arch_text.find("#extra\n"); pos != std::string::npos) {
    if (extra) *extra = arch_text.substr(pos + 7);
    arch_text = arch_text.substr(0, pos);
  } else if (extra) {
    extra->clear();
  }
  ArchConfig arch = ArchConfig::from_text(arch_text);
  const Tensor& misc = ckpt.find("lif.tau_reset");
  NeuronConfig neuron;
  neuron.tau = misc.value()[0];
  neuron.reset = misc.value()[1] != 0 ? ResetMode::SubtractReset : ResetMode::ZeroReset;
  Rng scratch(0);
  SpikingNetwork net(arch, neuron, scratch);
  for (auto& [name, t] : net.named_tensors()) {
    const Tensor& src = ckpt.find(name);
    if (src.shape() != t.shape())
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "': file " +
                               shape_str(src.shape()) + " vs model " + shape_str(t.shape()));
    t.value() = src.value();
  }
  const Tensor& th = ckpt.find("lif.thresholds");
  const Tensor& ic = ckpt.find("lif.init_charge");
  auto lifs = net.lif_layers();
  for (size_t i = 0; i < lifs.size(); ++i) {
    lifs[i]->cfg.tau = neuron.tau;
    lifs[i]->cfg.reset = neuron.reset;
    lifs[i]->cfg.threshold = th.value()[i];
    lifs[i]->cfg.init_charge = ic.value()[i];
    if (arch.quantized_ann) lifs[i]->lambda_set = true;
  }
  return net;
}

}  // namespace seenn
