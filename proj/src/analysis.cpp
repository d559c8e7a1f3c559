// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

#include "metamem/analysis.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

namespace metamem::analysis {

void EmbeddingTable::append(int task, int run, int ep, const Eigen::VectorXd& v) {
  if (rows() == 0 && values.cols() == 0) values.resize(0, v.size());
  if (v.size() != values.cols()) throw std::invalid_argument("EmbeddingTable: width mismatch");
  task_id.push_back(task);
  run_id.push_back(run);
  episode.push_back(ep);
  values.conservativeResize(values.rows() + 1, Eigen::NoChange);
  values.row(values.rows() - 1) = v.transpose();
}

void write_embeddings_csv(std::ostream& out, const EmbeddingTable& table,
                          const Eigen::MatrixXd* projection) {
  out << "task_id,run_id,episode";
  for (int k = 1; k <= table.latent_dim; ++k) out << ",v" << k;
  if (table.has_variance) {
    for (int k = 1; k <= table.latent_dim; ++k) out << ",var" << k;
  }
  if (projection != nullptr) {
    for (Eigen::Index k = 1; k <= projection->cols(); ++k) out << ",p" << k;
  }
  out << '\n';
  std::ostringstream cell;
  cell.precision(17);
  for (std::size_t i = 0; i < table.rows(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out << table.task_id[i] << ',' << table.run_id[i] << ',' << table.episode[i];
    for (Eigen::Index c = 0; c < table.values.cols(); ++c) {
      cell.str("");
      cell << table.values(r, c);
      out << ',' << cell.str();
    }
    if (projection != nullptr) {
      for (Eigen::Index c = 0; c < projection->cols(); ++c) {
        cell.str("");
        cell << (*projection)(r, c);
        out << ',' << cell.str();
      }
    }
    out << '\n';
  }
}

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

CsvTable read_csv(std::istream& in) {
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
  };
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("read_csv: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  t.header = split(line);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.header.size()) throw std::runtime_error("read_csv: ragged row");
    t.rows.push_back(std::move(cells));
  }
  return t;
}

EmbeddingTable read_embeddings_csv(std::istream& in) {
  const CsvTable csv = read_csv(in);
  const int tid = csv.column("task_id"), rid = csv.column("run_id"), eid = csv.column("episode");
  if (tid < 0 || rid < 0 || eid < 0) {
    throw std::runtime_error("read_embeddings_csv: missing task_id/run_id/episode column");
  }
  EmbeddingTable table;
  std::vector<int> cols;
  while (csv.column("v" + std::to_string(table.latent_dim + 1)) >= 0) {
    cols.push_back(csv.column("v" + std::to_string(++table.latent_dim)));
  }
  if (table.latent_dim == 0) throw std::runtime_error("read_embeddings_csv: no v1 column");
  table.has_variance = csv.column("var1") >= 0;
  if (table.has_variance) {
    for (int k = 1; k <= table.latent_dim; ++k) {
      const int c = csv.column("var" + std::to_string(k));
      if (c < 0) throw std::runtime_error("read_embeddings_csv: incomplete variance columns");
      cols.push_back(c);
    }
  }
  table.values.resize(0, static_cast<Eigen::Index>(cols.size()));
  for (const auto& row : csv.rows) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) {
      v(static_cast<Eigen::Index>(c)) = std::stod(row[static_cast<std::size_t>(cols[c])]);
    }
    table.append(std::stoi(row[static_cast<std::size_t>(tid)]),
                 std::stoi(row[static_cast<std::size_t>(rid)]),
                 std::stoi(row[static_cast<std::size_t>(eid)]), v);
  }
  return table;
}

PcaResult pca_project(const Eigen::MatrixXd& x, int dims) {
  if (dims <= 0) throw std::invalid_argument("pca_project: dims must be positive");
  if (x.rows() < dims) throw std::invalid_argument("pca_project: fewer rows than dims");
  PcaResult out;
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  Eigen::MatrixXd cov = centered.transpose() * centered / std::max<double>(1.0, n - 1.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::VectorXd vals = eig.eigenvalues();  // ascending
  const Eigen::MatrixXd vecs = eig.eigenvectors();
  const double top = vals.size() > 0 ? std::max(vals.maxCoeff(), 0.0) : 0.0;
  const double floor = std::max(1e-12 * top, 1e-300);

  out.points = Eigen::MatrixXd::Zero(n, dims);
  out.explained_variance = Eigen::VectorXd::Zero(dims);
  int rank_used = 0;
  for (int k = 0; k < dims && k < vals.size(); ++k) {
    const Eigen::Index idx = vals.size() - 1 - k;
    if (!(vals(idx) > floor)) break;
    Eigen::VectorXd dir = vecs.col(idx);
    Eigen::Index arg;
    dir.cwiseAbs().maxCoeff(&arg);
    if (dir(arg) < 0.0) dir = -dir;
    out.points.col(k) = centered * dir;
    out.explained_variance(k) = vals(idx);
    ++rank_used;
  }
  if (rank_used < dims) {
    out.warnings.push_back("pca_project: data rank " + std::to_string(rank_used) +
                           " below requested dims; padded with zeros");
  }
  return out;
}

Eigen::VectorXd perplexity_row(const Eigen::VectorXd& sq_dist, int self, double perplexity,
                               double tol, double* beta_out) {
  const Eigen::Index n = sq_dist.size();
  const double target = std::log(perplexity);
  double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
  Eigen::VectorXd p(n);
  for (int iter = 0; iter < 200; ++iter) {
    double min_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != self) min_d = std::min(min_d, sq_dist(j));
    }
    double sum = 0.0, weighted = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      // Shifting by the nearest distance keeps exp() away from underflow.
      p(j) = j == self ? 0.0 : std::exp(-beta * (sq_dist(j) - min_d));
      sum += p(j);
      weighted += p(j) * (sq_dist(j) - min_d);
    }
    const double entropy = std::log(sum) + beta * weighted / sum;
    p /= sum;
    const double diff = entropy - target;
    if (std::abs(diff) < tol) break;
    if (diff > 0.0) {
      lo = beta;
      beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
    } else {
      hi = beta;
      beta = 0.5 * (beta + lo);
    }
  }
  if (beta_out != nullptr) *beta_out = beta;
  return p;
}

namespace {

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& x) {
  const Eigen::VectorXd norms = x.rowwise().squaredNorm();
  Eigen::MatrixXd d = (-2.0 * x * x.transpose()).colwise() + norms;
  d.rowwise() += norms.transpose();
  d = d.cwiseMax(0.0);
  d.diagonal().setZero();
  return d;
}

// Student-t kernel numerators with a zero diagonal.
Eigen::MatrixXd student_kernel(const Eigen::MatrixXd& y) {
  Eigen::MatrixXd num = (1.0 + squared_distances(y).array()).inverse().matrix();
  num.diagonal().setZero();
  return num;
}

}  // namespace

double tsne_kl(const Eigen::MatrixXd& p, const Eigen::MatrixXd& y) {
  const Eigen::MatrixXd num = student_kernel(y);
  const double z = num.sum();
  double kl = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      if (i == j || p(i, j) <= 0.0) continue;
      const double q = std::max(num(i, j) / z, 1e-300);
      kl += p(i, j) * std::log(p(i, j) / q);
    }
  }
  return kl;
}

TsneResult tsne_project(const Eigen::MatrixXd& x, const TsneOptions& opt) {
  const Eigen::Index n = x.rows();
  if (opt.perplexity < 5.0 || opt.perplexity > (static_cast<double>(n) - 1.0) / 3.0) {
    throw std::invalid_argument("tsne_project: perplexity must lie in [5, (n - 1) / 3]");
  }
  TsneResult out;
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal(0.0, 1e-4);
  Eigen::MatrixXd y(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    y(i, 0) = normal(rng);
    y(i, 1) = normal(rng);
  }

  const Eigen::MatrixXd d = squared_distances(x);
  if (d.maxCoeff() <= 0.0) {
    out.warnings.push_back("tsne_project: all points identical; returning the initial layout");
    out.points = y;
    return out;
  }

  Eigen::MatrixXd p(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    p.row(i) = perplexity_row(d.row(i).transpose(), static_cast<int>(i), opt.perplexity,
                              opt.perplexity_tol)
                   .transpose();
  }
  p = (p + p.transpose()) / (2.0 * static_cast<double>(n));
  p = p.cwiseMax(1e-12);
  p.diagonal().setZero();

  out.kl_initial = tsne_kl(p, y);

  Eigen::MatrixXd velocity = Eigen::MatrixXd::Zero(n, 2);
  Eigen::MatrixXd gains = Eigen::MatrixXd::Ones(n, 2);
  for (int it = 0; it < opt.iterations; ++it) {
    const bool early = it < opt.exaggeration_iters;
    const double exaggeration = early ? opt.exaggeration : 1.0;
    const double momentum = early ? opt.initial_momentum : opt.final_momentum;
    const Eigen::MatrixXd num = student_kernel(y);
    const double z = num.sum();
    // W_ij = (exaggeration * p_ij - q_ij) * num_ij
    const Eigen::MatrixXd w =
        ((exaggeration * p).array() - num.array() / z).matrix().cwiseProduct(num);
    Eigen::MatrixXd grad =
        4.0 * (w.rowwise().sum().asDiagonal() * y - w * y);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int c = 0; c < 2; ++c) {
        const bool same_sign = (grad(i, c) > 0.0) == (velocity(i, c) > 0.0);
        gains(i, c) = same_sign ? std::max(gains(i, c) * 0.8, 0.01) : gains(i, c) + 0.2;
      }
    }
    velocity = momentum * velocity - opt.learning_rate * gains.cwiseProduct(grad);
    y += velocity;
    y.rowwise() -= y.colwise().mean();
  }
  out.kl_final = tsne_kl(p, y);
  if (!std::isfinite(out.kl_final)) throw std::runtime_error("tsne_project: objective diverged");
  out.points = y;
  return out;
}

SilhouetteResult cluster_quality(const Eigen::MatrixXd& x, const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != x.rows()) {
    throw std::invalid_argument("cluster_quality: one label per row required");
  }
  std::map<int, std::vector<Eigen::Index>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    members[labels[i]].push_back(static_cast<Eigen::Index>(i));
  }
  if (members.size() < 2) throw std::invalid_argument("cluster_quality: need at least 2 labels");
  SilhouetteResult out;
  for (const auto& [label, idx] : members) {
    if (idx.size() == 1) {
      ++out.excluded;
      out.warnings.push_back("cluster_quality: label " + std::to_string(label) +
                             " is a singleton; its point is excluded");
    }
  }
  const Eigen::MatrixXd d = squared_distances(x).cwiseSqrt();
  double total = 0.0;
  for (const auto& [label, idx] : members) {
    if (idx.size() < 2) continue;
    for (Eigen::Index i : idx) {
      double a = 0.0;
      for (Eigen::Index j : idx) a += d(i, j);
      a /= static_cast<double>(idx.size() - 1);
      double b = std::numeric_limits<double>::infinity();
      for (const auto& [other, oidx] : members) {
        if (other == label) continue;
        double m = 0.0;
        for (Eigen::Index j : oidx) m += d(i, j);
        b = std::min(b, m / static_cast<double>(oidx.size()));
      }
      const double denom = std::max(a, b);
      total += denom > 0.0 ? (b - a) / denom : 0.0;
      ++out.used;
    }
  }
  out.score = out.used > 0 ? total / static_cast<double>(out.used) : 0.0;
  return out;
}

AdaptationCurve adaptation_curve(const Eigen::MatrixXd& returns) {
  if (returns.rows() < 1) throw std::invalid_argument("adaptation_curve: no runs");
  AdaptationCurve c;
  const double n = static_cast<double>(returns.rows());
  c.mean = returns.colwise().mean().transpose();
  c.std_error = Eigen::VectorXd::Zero(returns.cols());
  if (returns.rows() > 1) {
    for (Eigen::Index e = 0; e < returns.cols(); ++e) {
      const double var = (returns.col(e).array() - c.mean(e)).square().sum() / (n - 1.0);
      c.std_error(e) = std::sqrt(var / n);
    }
  }
  return c;
}

void write_curve_csv(std::ostream& out, const std::vector<AdaptationCurve>& curves,
                     const std::vector<CurveLabels>& labels) {
  if (curves.size() != labels.size()) {
    throw std::invalid_argument("write_curve_csv: one label set per curve required");
  }
  out << "episode,mean_return,stderr,algorithm,strategy,env\n";
  std::ostringstream cell;
  cell.precision(17);
  for (std::size_t i = 0; i < curves.size(); ++i) {
    for (Eigen::Index e = 0; e < curves[i].mean.size(); ++e) {
      cell.str("");
      cell << curves[i].mean(e) << ',' << curves[i].std_error(e);
      out << e + 1 << ',' << cell.str() << ',' << labels[i].algorithm << ','
          << labels[i].strategy << ',' << labels[i].env << '\n';
    }
  }
}

BootstrapCi bootstrap_mean_diff(const std::vector<double>& a, const std::vector<double>& b,
                                int resamples, double level, std::uint64_t seed) {
  if (a.empty() || b.empty() || resamples <= 0 || !(level > 0.0 && level < 1.0)) {
    throw std::invalid_argument("bootstrap_mean_diff: empty arm or bad settings");
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pa(0, a.size() - 1), pb(0, b.size() - 1);
  std::vector<double> diffs(static_cast<std::size_t>(resamples));
  for (auto& d : diffs) {
    double sa = 0.0, sb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sa += a[pa(rng)];
    for (std::size_t i = 0; i < b.size(); ++i) sb += b[pb(rng)];
    d = sa / static_cast<double>(a.size()) - sb / static_cast<double>(b.size());
  }
  std::sort(diffs.begin(), diffs.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(diffs.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, diffs.size() - 1);
    return diffs[lo] + (pos - static_cast<double>(lo)) * (diffs[hi] - diffs[lo]);
  };
  const double tail = 0.5 * (1.0 - level);
  return {mean(a) - mean(b), quantile(tail), quantile(1.0 - tail)};
}

}  // namespace metamem::analysis
