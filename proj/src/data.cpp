#include "seenn/data.hpp"

#include <cmath>
#include <fstream>

namespace seenn {

Dataset Dataset::subset(const std::vector<int>& indices) const {
  Dataset out;
  const std::int64_t stride = images.size() / images.dim(0);
  Shape s = images.shape();
  s[0] = static_cast<int>(indices.size());
  Array v(stride * static_cast<std::int64_t>(indices.size()));
  out.labels.reserve(indices.size());
  for (size_t i = 0; i < indices.size(); ++i) {
    v.segment(static_cast<std::int64_t>(i) * stride, stride) =
        images.value().segment(static_cast<std::int64_t>(indices[i]) * stride, stride);
    out.labels.push_back(labels[indices[i]]);
  }
  out.images = Tensor(std::move(s), std::move(v));
  out.num_classes = num_classes;
  out.split = split;
  return out;
}

Dataset Dataset::head(int k) const {
  std::vector<int> idx(std::min(k, size()));
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  return subset(idx);
}

ChannelStats compute_channel_stats(const Dataset& train) {
  const int c = train.images.dim(1);
  const std::int64_t per = static_cast<std::int64_t>(train.images.dim(2)) * train.images.dim(3);
  const std::int64_t n = train.images.dim(0);
  ChannelStats st;
  st.mean.assign(c, 0);
  st.stddev.assign(c, 0);
  for (int j = 0; j < c; ++j) {
    double s = 0, s2 = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      auto seg = train.images.value().segment((i * c + j) * per, per);
      s += seg.sum();
      s2 += seg.square().sum();
    }
    const double count = static_cast<double>(n * per);
    const double mean = s / count;
    st.mean[j] = static_cast<Scalar>(mean);
    st.stddev[j] = static_cast<Scalar>(std::sqrt(std::max(s2 / count - mean * mean, 1e-12)));
  }
  return st;
}

void standardize(Dataset& ds, const ChannelStats& stats) {
  const int c = ds.images.dim(1);
  const std::int64_t per = static_cast<std::int64_t>(ds.images.dim(2)) * ds.images.dim(3);
  for (std::int64_t i = 0; i < ds.images.dim(0); ++i)
    for (int j = 0; j < c; ++j) {
      auto seg = ds.images.value().segment((i * c + j) * per, per);
      seg = (seg - stats.mean[j]) / stats.stddev[j];
    }
}

// ---------------------------------------------------------------------------
// IDX
// ---------------------------------------------------------------------------

namespace {

std::uint32_t read_be32(std::istream& is, const std::string& path, std::int64_t offset) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is)
    throw std::runtime_error("idx parse error in '" + path + "': truncated at offset " +
                             std::to_string(offset));
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

std::vector<unsigned char> read_bytes(std::istream& is, std::int64_t count,
                                      const std::string& path, std::int64_t offset) {
  std::vector<unsigned char> out(count);
  is.read(reinterpret_cast<char*>(out.data()), count);
  if (is.gcount() != count)
    throw std::runtime_error("idx parse error in '" + path + "': expected " +
                             std::to_string(count) + " bytes at offset " + std::to_string(offset) +
                             ", got " + std::to_string(is.gcount()));
  return out;
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream im(images_path, std::ios::binary);
  if (!im) throw std::runtime_error("cannot open '" + images_path + "'");
  const auto magic_i = read_be32(im, images_path, 0);
  if (magic_i != 0x00000803)
    throw std::runtime_error("idx parse error in '" + images_path +
                             "': expected magic 0x00000803, found 0x" +
                             [&] { char b[16]; std::snprintf(b, 16, "%08x", magic_i); return std::string(b); }());
  const int n = static_cast<int>(read_be32(im, images_path, 4));
  const int h = static_cast<int>(read_be32(im, images_path, 8));
  const int w = static_cast<int>(read_be32(im, images_path, 12));
  auto pixels = read_bytes(im, static_cast<std::int64_t>(n) * h * w, images_path, 16);

  std::ifstream lb(labels_path, std::ios::binary);
  if (!lb) throw std::runtime_error("cannot open '" + labels_path + "'");
  const auto magic_l = read_be32(lb, labels_path, 0);
  if (magic_l != 0x00000801)
    throw std::runtime_error("idx parse error in '" + labels_path +
                             "': expected magic 0x00000801, found 0x" +
                             [&] { char b[16]; std::snprintf(b, 16, "%08x", magic_l); return std::string(b); }());
  const int nl = static_cast<int>(read_be32(lb, labels_path, 4));
  if (nl != n)
    throw std::runtime_error("idx parse error: " + std::to_string(n) + " images but " +
                             std::to_string(nl) + " labels");
  auto raw_labels = read_bytes(lb, nl, labels_path, 8);

  Dataset ds;
  Array v(static_cast<std::int64_t>(n) * h * w);
  for (std::int64_t i = 0; i < v.size(); ++i) v[i] = static_cast<Scalar>(pixels[i]) / Scalar(255);
  ds.images = Tensor({n, 1, h, w}, std::move(v));
  ds.labels.assign(raw_labels.begin(), raw_labels.end());
  ds.num_classes = 10;
  return ds;
}

// ---------------------------------------------------------------------------
// CIFAR-10 binary
// ---------------------------------------------------------------------------

Dataset load_cifar10_bin(const std::vector<std::string>& paths) {
  constexpr std::int64_t kRecord = 3073;
  std::vector<unsigned char> raw;
  for (const auto& path : paths) {
    std::ifstream is(path, std::ios::binary | std::ios::ate);
    if (!is) throw std::runtime_error("cannot open '" + path + "'");
    const std::int64_t len = is.tellg();
    if (len % kRecord != 0)
      throw std::runtime_error("cifar parse error in '" + path + "': length " +
                               std::to_string(len) + " is not a multiple of 3073");
    is.seekg(0);
    const size_t prev = raw.size();
    raw.resize(prev + len);
    is.read(reinterpret_cast<char*>(raw.data() + prev), len);
  }
  const int n = static_cast<int>(raw.size() / kRecord);
  Dataset ds;
  Array v(static_cast<std::int64_t>(n) * 3072);
  ds.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    const unsigned char* rec = raw.data() + static_cast<std::int64_t>(i) * kRecord;
    if (rec[0] > 9)
      throw std::runtime_error("cifar parse error: label byte " + std::to_string(rec[0]) +
                               " > 9 in record " + std::to_string(i));
    ds.labels[i] = rec[0];
    for (std::int64_t j = 0; j < 3072; ++j)
      v[static_cast<std::int64_t>(i) * 3072 + j] = static_cast<Scalar>(rec[1 + j]) / Scalar(255);
  }
  ds.images = Tensor({n, 3, 32, 32}, std::move(v));
  ds.num_classes = 10;
  return ds;
}

// ---------------------------------------------------------------------------
// synthetic clusters
// ---------------------------------------------------------------------------

SyntheticData make_synthetic(const SyntheticSpec& spec) {
  if (spec.hard_fraction < 0 || spec.hard_fraction > 1)
    throw std::invalid_argument("make_synthetic: hard_fraction outside [0,1]");
  Rng rng(spec.seed);
  const int dim = spec.channels * spec.height * spec.width;

  // fixed random unit directions as class prototypes
  std::vector<Array> prototypes;
  for (int c = 0; c < spec.n_classes; ++c) {
    Array p(dim);
    for (int i = 0; i < dim; ++i) p[i] = static_cast<Scalar>(rng.normal());
    p *= spec.scale / std::sqrt(p.square().sum());
    prototypes.push_back(std::move(p));
  }

  auto make_split = [&](int per_class, const std::string& tag, std::vector<bool>& hard_tags) {
    const int n = per_class * spec.n_classes;
    Array v(static_cast<std::int64_t>(n) * dim);
    Dataset ds;
    ds.labels.resize(n);
    hard_tags.resize(n);
    for (int i = 0; i < n; ++i) {
      const int cls = i % spec.n_classes;
      const bool hard = rng.uniform() < spec.hard_fraction;
      const Scalar sigma = hard ? spec.sigma_hard : spec.sigma_easy;
      const Scalar contrast = hard ? spec.hard_contrast : Scalar(1);
      const Scalar mix = hard ? spec.hard_mix : Scalar(0);
      const Array& other = prototypes[(cls + 1) % spec.n_classes];
      for (int j = 0; j < dim; ++j) {
        const Scalar base = prototypes[cls][j] * (Scalar(1) - mix) + other[j] * mix;
        v[static_cast<std::int64_t>(i) * dim + j] =
            base * contrast + static_cast<Scalar>(rng.normal()) * sigma;
      }
      ds.labels[i] = cls;
      hard_tags[i] = hard;
    }
    ds.images = Tensor({n, spec.channels, spec.height, spec.width}, std::move(v));
    ds.num_classes = spec.n_classes;
    ds.split = tag;
    return ds;
  };

  SyntheticData out;
  out.train = make_split(spec.n_per_class, "train", out.train_hard);
  out.test = make_split(std::max(spec.n_per_class / 2, 1), "test", out.test_hard);
  return out;
}

}  // namespace seenn
