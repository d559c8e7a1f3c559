// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace metamem::analysis {

template <typename Scalar>
Scalar discounted_return(const std::vector<Scalar>& rewards, Scalar gamma) {
  if (gamma < Scalar(0) || gamma > Scalar(1)) {
    throw std::invalid_argument("discounted_return: gamma outside [0, 1]");
  }
  Scalar acc(0), w(1);
  for (const Scalar& r : rewards) {
    acc += w * r;
    w *= gamma;
  }
  return acc;
}

// Latent embeddings with their run bookkeeping. `values` has one row per
// embedding: `latent_dim` means, then `latent_dim` variances when present.
struct EmbeddingTable {
  std::vector<int> task_id;
  std::vector<int> run_id;
  std::vector<int> episode;
  Eigen::MatrixXd values;
  int latent_dim = 0;
  bool has_variance = false;

  std::size_t rows() const { return task_id.size(); }
  void append(int task, int run, int ep, const Eigen::VectorXd& v);
};

// Header: task_id,run_id,episode,v1..vK[,var1..varK][,p1,p2 when given].
void write_embeddings_csv(std::ostream& out, const EmbeddingTable& table,
                          const Eigen::MatrixXd* projection = nullptr);
EmbeddingTable read_embeddings_csv(std::istream& in);

struct Projection {
  Eigen::MatrixXd points;  // rows x dims
  std::vector<std::string> warnings;
};

struct PcaResult : Projection {
  Eigen::VectorXd explained_variance;  // per component, sample covariance
};

// Centred projection onto the top principal directions; each direction is
// flipped so its largest-magnitude loading is positive. Missing rank is
// padded with zero columns.
PcaResult pca_project(const Eigen::MatrixXd& x, int dims = 2);

struct TsneOptions {
  double perplexity = 30.0;
  int iterations = 1000;
  double learning_rate = 200.0;
  double exaggeration = 12.0;
  int exaggeration_iters = 250;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  double perplexity_tol = 1e-5;
  std::uint64_t seed = 0;
};

struct TsneResult : Projection {
  double kl_initial = 0.0;
  double kl_final = 0.0;
};

// Exact O(n^2) t-SNE into two dimensions.
TsneResult tsne_project(const Eigen::MatrixXd& x, const TsneOptions& opt = {});

// Conditional affinities for one row of squared distances, bandwidth chosen by
// bisection so the entropy (nats) matches log(perplexity).
Eigen::VectorXd perplexity_row(const Eigen::VectorXd& sq_dist, int self, double perplexity,
                               double tol, double* beta_out = nullptr);

double tsne_kl(const Eigen::MatrixXd& p, const Eigen::MatrixXd& y);

struct SilhouetteResult {
  double score = 0.0;
  std::size_t used = 0;      // points that contributed
  std::size_t excluded = 0;  // members of singleton clusters
  std::vector<std::string> warnings;
};

// Mean silhouette over points under Euclidean distance.
SilhouetteResult cluster_quality(const Eigen::MatrixXd& x, const std::vector<int>& labels);

struct AdaptationCurve {
  Eigen::VectorXd mean;
  Eigen::VectorXd std_error;
};

// Rows are runs, columns are episodes.
AdaptationCurve adaptation_curve(const Eigen::MatrixXd& returns);

struct CurveLabels {
  std::string algorithm;
  std::string strategy;
  std::string env;
};
// Header: episode,mean_return,stderr,algorithm,strategy,env (episodes from 1).
void write_curve_csv(std::ostream& out, const std::vector<AdaptationCurve>& curves,
                     const std::vector<CurveLabels>& labels);

struct BootstrapCi {
  double estimate = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

// Percentile interval for mean(a) - mean(b) resampling each arm with
// replacement.
BootstrapCi bootstrap_mean_diff(const std::vector<double>& a, const std::vector<double>& b,
                                int resamples, double level, std::uint64_t seed);

// Minimal comma-separated reader: header row then numeric-or-text cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
};
CsvTable read_csv(std::istream& in);

}  // namespace metamem::analysis
