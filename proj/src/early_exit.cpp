#include "seenn/early_exit.hpp"

#include "seenn/ops.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace seenn {

void ExitConfig::validate() const {
  if (candidates.empty()) throw std::invalid_argument("ExitConfig: empty candidate set");
  for (size_t i = 1; i < candidates.size(); ++i)
    if (candidates[i] <= candidates[i - 1])
      throw std::invalid_argument("ExitConfig: candidates must be strictly increasing");
  if (candidates.front() < 1)
    throw std::invalid_argument("ExitConfig: candidates must be positive");
  if (alpha <= 0) throw std::invalid_argument("ExitConfig: alpha must be positive");
}

Scalar confidence(const Tensor& logits) {
  Tensor p = softmax(logits.detach());
  return p.value().maxCoeff();
}

std::vector<Scalar> confidence_rows(const Tensor& logits) {
  const int n = logits.dim(0), m = logits.dim(1);
  std::vector<Scalar> cs(n);
  for (int i = 0; i < n; ++i) {
    auto seg = logits.value().segment(static_cast<std::int64_t>(i) * m, m);
    Array e = (seg - seg.maxCoeff()).exp();
    cs[i] = e.maxCoeff() / e.sum();
  }
  return cs;
}

CorrectnessMatrix CorrectnessMatrix::from_outputs(const TimestepOutputs& outputs,
                                                  const std::vector<int>& labels) {
  CorrectnessMatrix m;
  m.n = outputs.batch();
  m.T = outputs.timesteps();
  m.a.assign(static_cast<std::size_t>(m.n) * m.T, false);
  for (int t = 1; t <= m.T; ++t) {
    const auto pred = predict(outputs, t);
    for (int i = 0; i < m.n; ++i) m.set(i, t, pred[i] == labels[i]);
  }
  return m;
}

std::vector<ExitDecision> infer_seenn1(SpikingNetwork& net, const Dataset& data,
                                       const ExitConfig& cfg, int batch_size) {
  cfg.validate();
  net.set_training(false);
  std::vector<ExitDecision> decisions(data.size());

  for (int start = 0; start < data.size(); start += batch_size) {
    std::vector<int> idx;
    for (int i = start; i < std::min(start + batch_size, data.size()); ++i) idx.push_back(i);
    Dataset batch = data.subset(idx);

    net.reset_states();
    // active[j] = original position (within batch) of current row j
    std::vector<int> active(idx.size());
    for (size_t j = 0; j < active.size(); ++j) active[j] = static_cast<int>(j);
    Tensor x = batch.images;
    int steps_run = 0;

    for (size_t k = 0; k < cfg.candidates.size() && !active.empty(); ++k) {
      const int t_k = cfg.candidates[k];
      TimestepOutputs partial;
      net.forward_more(x, t_k - steps_run, partial);
      steps_run = t_k;
      const Tensor& acc = partial.accumulated.back();
      const auto cs = confidence_rows(acc);
      const auto pred = argmax_rows(acc);
      const bool last = (k + 1 == cfg.candidates.size());

      std::vector<int> keep;
      for (size_t j = 0; j < active.size(); ++j) {
        if (cs[j] >= cfg.alpha || last) {
          const int orig = idx[active[j]];
          ExitDecision d;
          d.sample = orig;
          d.exit_t = t_k;
          d.predicted = pred[j];
          d.confidence = cs[j];
          d.correct = pred[j] == data.labels[orig];
          decisions[orig] = d;
        } else {
          keep.push_back(static_cast<int>(j));
        }
      }
      if (!last && keep.size() < active.size()) {
        std::vector<int> next_active;
        next_active.reserve(keep.size());
        for (int j : keep) next_active.push_back(active[j]);
        active = std::move(next_active);
        if (!active.empty()) {
          net.compact_states(keep);
          std::vector<int> rows;
          rows.reserve(active.size());
          for (int a : active) rows.push_back(a);
          x = gather_rows(batch.images, rows);
        }
      } else if (last) {
        active.clear();
      }
    }
  }
  return decisions;
}

double aet(const CorrectnessMatrix& m) {
  if (m.n < 1) throw std::invalid_argument("aet: empty matrix");
  // |C_t| per column; W = rows wrong at T
  std::vector<int> c(m.T + 1, 0);
  for (int t = 1; t <= m.T; ++t)
    for (int i = 0; i < m.n; ++i)
      if (m.at(i, t)) ++c[t];
  const int wrong = m.n - c[m.T];
  double num = c[1] + static_cast<double>(m.T) * wrong;
  for (int t = 2; t <= m.T; ++t) num += static_cast<double>(t) * (c[t] - c[t - 1]);
  return num / m.n;
}

double empirical_aet(const CorrectnessMatrix& m) {
  if (m.n < 1) throw std::invalid_argument("empirical_aet: empty matrix");
  double sum = 0;
  for (int i = 0; i < m.n; ++i) {
    int earliest = m.T;
    for (int t = 1; t <= m.T; ++t)
      if (m.at(i, t)) {
        earliest = t;
        break;
      }
    sum += earliest;
  }
  return sum / m.n;
}

std::vector<SweepRow> sweep_alpha(SpikingNetwork& net, const Dataset& data,
                                  const std::vector<Scalar>& alphas,
                                  const std::vector<int>& candidates) {
  std::vector<SweepRow> rows;
  for (Scalar alpha : alphas) {
    ExitConfig cfg{alpha, candidates};
    const auto decisions = infer_seenn1(net, data, cfg);
    SweepRow row;
    row.alpha = alpha;
    row.exit_histogram.assign(candidates.size(), 0);
    int correct = 0;
    double t_sum = 0;
    for (const auto& d : decisions) {
      t_sum += d.exit_t;
      if (d.correct) ++correct;
      const auto it = std::find(candidates.begin(), candidates.end(), d.exit_t);
      ++row.exit_histogram[it - candidates.begin()];
    }
    row.avg_t = t_sum / decisions.size();
    row.accuracy = static_cast<double>(correct) / decisions.size();
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows,
                     const std::vector<int>& candidates) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path + "'");
  os << "alpha,avg_t,accuracy";
  for (int t : candidates) os << ",n_exit_t" << t;
  os << "\n";
  os.precision(17);
  for (const auto& r : rows) {
    os << r.alpha << "," << r.avg_t << "," << r.accuracy;
    for (int c : r.exit_histogram) os << "," << c;
    os << "\n";
  }
}

std::string sweep_json(const std::vector<SweepRow>& rows, const std::vector<int>& candidates) {
  std::ostringstream os;
  os.precision(17);
  os << "{\"rows\":[";
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (i) os << ",";
    os << "{\"alpha\":" << r.alpha << ",\"avg_t\":" << r.avg_t << ",\"accuracy\":" << r.accuracy
       << ",\"histogram\":{";
    for (size_t k = 0; k < candidates.size(); ++k) {
      if (k) os << ",";
      os << "\"t" << candidates[k] << "\":" << r.exit_histogram[k];
    }
    os << "}}";
  }
  os << "]}";
  return os.str();
}

void save_correctness_matrix(const std::string& path, const CorrectnessMatrix& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "'");
  const std::uint32_t n = static_cast<std::uint32_t>(m.n), T = static_cast<std::uint32_t>(m.T);
  os.write(reinterpret_cast<const char*>(&n), 4);
  os.write(reinterpret_cast<const char*>(&T), 4);
  const std::size_t bits = m.a.size();
  std::vector<unsigned char> bytes((bits + 7) / 8, 0);
  for (std::size_t i = 0; i < bits; ++i)
    if (m.a[i]) bytes[i / 8] |= static_cast<unsigned char>(1u << (i % 8));
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
}

CorrectnessMatrix load_correctness_matrix(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  std::uint32_t n = 0, T = 0;
  is.read(reinterpret_cast<char*>(&n), 4);
  is.read(reinterpret_cast<char*>(&T), 4);
  if (!is) throw std::runtime_error("correctness matrix: truncated header in '" + path + "'");
  CorrectnessMatrix m;
  m.n = static_cast<int>(n);
  m.T = static_cast<int>(T);
  const std::size_t bits = static_cast<std::size_t>(n) * T;
  std::vector<unsigned char> bytes((bits + 7) / 8);
  is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!is) throw std::runtime_error("correctness matrix: truncated data in '" + path + "'");
  m.a.resize(bits);
  for (std::size_t i = 0; i < bits; ++i) m.a[i] = (bytes[i / 8] >> (i % 8)) & 1u;
  return m;
}

}  // namespace seenn
