// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

#include <Eigen/SVD>

#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "metamem/analysis.hpp"
#include "metamem/nn/layers.hpp"

using namespace metamem;
using namespace metamem::analysis;
using Eigen::MatrixXd;

namespace {

MatrixXd blobs(int per_blob, double separation, nn::Rng& rng, std::vector<int>* labels) {
  MatrixXd x = nn::randn(2 * per_blob, 3, rng);
  for (int i = per_blob; i < 2 * per_blob; ++i) x(i, 0) += separation;
  if (labels != nullptr) {
    labels->assign(static_cast<std::size_t>(2 * per_blob), 0);
    for (int i = per_blob; i < 2 * per_blob; ++i) (*labels)[static_cast<std::size_t>(i)] = 1;
  }
  return x;
}

// Plain perceptron with bias; true when it separates the labels within the
// epoch budget.
bool perceptron_separates(const MatrixXd& y, const std::vector<int>& labels, int epochs) {
  Eigen::Vector3d w = Eigen::Vector3d::Zero();
  for (int e = 0; e < epochs; ++e) {
    int mistakes = 0;
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      const double t = labels[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0;
      Eigen::Vector3d xi(y(i, 0), y(i, 1), 1.0);
      if (t * w.dot(xi) <= 0.0) {
        w += t * xi;
        ++mistakes;
      }
    }
    if (mistakes == 0) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("discounted return examples") {
  CHECK(discounted_return<double>({1, 1, 1}, 0.0) == 1.0);
  CHECK(discounted_return<double>({1, 1, 1}, 1.0) == 3.0);
  CHECK(discounted_return<double>({1, 2, 3}, 0.5) == 2.75);
  CHECK(discounted_return<float>({1.f, 2.f}, 0.5f) == 2.0f);
  CHECK_THROWS_AS(discounted_return<double>({1.0}, 1.5), std::invalid_argument);
}

TEST_CASE("pca on rank-one data") {
  nn::Rng rng(1);
  Eigen::VectorXd dir = nn::randn(5, 1, rng).col(0).normalized();
  MatrixXd x(50, 5);
  for (int i = 0; i < 50; ++i) x.row(i) = (0.1 * i - 2.0) * dir.transpose() + Eigen::RowVectorXd::Constant(5, 3.0);
  auto res = pca_project(x, 2);
  CHECK(res.points.col(1).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(res.explained_variance(1) == 0.0);
  CHECK(res.warnings.size() == 1);
}

TEST_CASE("pca variance agrees with an svd oracle") {
  nn::Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    MatrixXd x = nn::randn(40, 6, rng) * nn::randn(6, 6, rng);
    auto res = pca_project(x, 2);
    MatrixXd c = x.rowwise() - x.colwise().mean();
    Eigen::JacobiSVD<MatrixXd> svd(c);
    const auto s = svd.singularValues();
    const double oracle = (s(0) * s(0) + s(1) * s(1)) / 39.0;
    CHECK(std::abs(res.explained_variance.sum() - oracle) < 1e-9);
    // The projected columns carry exactly that variance.
    const double proj = res.points.colwise().squaredNorm().sum() / 39.0;
    CHECK(std::abs(proj - oracle) < 1e-9);
    CHECK(res.warnings.empty());
  }
}

TEST_CASE("pca sign convention and row-order invariance") {
  nn::Rng rng(3);
  MatrixXd x = nn::randn(30, 4, rng) * nn::randn(4, 4, rng);
  auto a = pca_project(x, 2);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(30);
  perm.setIdentity();
  std::shuffle(perm.indices().data(), perm.indices().data() + 30, rng);
  auto b = pca_project(perm * x, 2);
  CHECK(((perm * a.points) - b.points).cwiseAbs().maxCoeff() < 1e-9);
  // Flipping the data flips the scores but not the loadings' sign rule, so
  // projections of -x are the negation of projections of x.
  auto c = pca_project(-x, 2);
  CHECK((c.points + a.points).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("pca on identical rows") {
  MatrixXd x = MatrixXd::Constant(6, 3, 2.5);
  auto res = pca_project(x, 2);
  CHECK(res.points.isZero(0.0));
  CHECK_FALSE(res.warnings.empty());
}

TEST_CASE("perplexity search hits the target entropy") {
  nn::Rng rng(4);
  MatrixXd x = nn::randn(60, 3, rng);
  for (double perp : {5.0, 15.0, 30.0}) {
    for (int i = 0; i < 60; i += 7) {
      Eigen::VectorXd d = (x.rowwise() - x.row(i)).rowwise().squaredNorm();
      Eigen::VectorXd p = perplexity_row(d, i, perp, 1e-5);
      double h = 0.0;
      for (double v : p) {
        if (v > 0.0) h -= v * std::log(v);
      }
      CHECK(std::abs(h - std::log(perp)) < 1e-5);
      CHECK(p(i) == 0.0);
      CHECK(std::abs(p.sum() - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("tsne rejects out-of-range perplexity") {
  nn::Rng rng(5);
  MatrixXd x = nn::randn(20, 3, rng);
  TsneOptions opt;
  opt.perplexity = 30.0;
  CHECK_THROWS_AS(tsne_project(x, opt), std::invalid_argument);
  opt.perplexity = 4.0;
  CHECK_THROWS_AS(tsne_project(x, opt), std::invalid_argument);
}

TEST_CASE("tsne on identical points warns and returns a tiny layout") {
  MatrixXd x = MatrixXd::Ones(40, 3);
  TsneOptions opt;
  opt.perplexity = 10.0;
  auto res = tsne_project(x, opt);
  CHECK_FALSE(res.warnings.empty());
  CHECK(res.points.rows() == 40);
  CHECK(res.points.cwiseAbs().maxCoeff() < 1e-2);
}

TEST_CASE("tsne lowers its objective and keeps distant clusters separable") {
  nn::Rng rng(6);
  std::vector<int> labels;
  MatrixXd x = blobs(50, 10.0, rng, &labels);
  TsneOptions opt;
  opt.perplexity = 20.0;
  opt.iterations = 500;
  opt.seed = 3;
  auto res = tsne_project(x, opt);
  CHECK(std::isfinite(res.kl_final));
  CHECK(res.kl_final < res.kl_initial);
  CHECK(perceptron_separates(res.points, labels, 1000));
  auto again = tsne_project(x, opt);
  CHECK(again.points == res.points);
}

TEST_CASE("silhouette on separated blobs, random labels and duplicates") {
  nn::Rng rng(7);
  std::vector<int> labels;
  MatrixXd x = blobs(60, 20.0, rng, &labels);
  CHECK(cluster_quality(x, labels).score > 0.8);

  MatrixXd one = nn::randn(400, 2, rng);
  std::vector<int> random_labels(400);
  std::bernoulli_distribution coin(0.5);
  for (auto& l : random_labels) l = coin(rng) ? 1 : 0;
  CHECK(std::abs(cluster_quality(one, random_labels).score) < 0.05);

  MatrixXd dup = MatrixXd::Ones(6, 2);
  CHECK(cluster_quality(dup, {0, 0, 1, 1, 2, 2}).score <= 0.0);
}

TEST_CASE("silhouette matches a hand-computed 1-D example") {
  MatrixXd x(4, 1);
  x << 0.0, 1.0, 4.0, 6.0;
  // a: 1,1,2,2; b: 5,4,3.5,5.5
  const double expect = ((5.0 - 1) / 5.0 + (4.0 - 1) / 4.0 + (3.5 - 2) / 3.5 + (5.5 - 2) / 5.5) / 4;
  CHECK(std::abs(cluster_quality(x, {0, 0, 1, 1}).score - expect) < 1e-12);
}

TEST_CASE("silhouette excludes singleton clusters and approaches one with separation") {
  nn::Rng rng(8);
  MatrixXd x = nn::randn(7, 2, rng);
  auto res = cluster_quality(x, {0, 0, 0, 1, 1, 1, 2});
  CHECK(res.excluded == 1);
  CHECK(res.used == 6);
  CHECK(res.warnings.size() == 1);
  CHECK_THROWS_AS(cluster_quality(x, std::vector<int>(7, 0)), std::invalid_argument);

  std::vector<int> labels;
  double prev = -1.0;
  for (double sep : {2.0, 8.0, 32.0, 128.0}) {
    nn::Rng r(9);
    MatrixXd b = blobs(30, sep, r, &labels);
    const double s = cluster_quality(b, labels).score;
    CHECK(s > prev);
    prev = s;
  }
  CHECK(prev > 0.95);
}

TEST_CASE("adaptation curve examples") {
  MatrixXd one(1, 3);
  one << 1, 2, 3;
  auto c1 = adaptation_curve(one);
  CHECK(c1.mean == one.row(0).transpose());
  CHECK(c1.std_error.isZero(0.0));
  auto flat = adaptation_curve(MatrixXd::Constant(4, 5, 2.0));
  CHECK((flat.mean.array() == 2.0).all());
  MatrixXd m(2, 2);
  m << 0, 1, 2, 3;
  auto c = adaptation_curve(m);
  CHECK(c.mean(0) == 1.0);
  CHECK(c.mean(1) == 2.0);
  CHECK(std::abs(c.std_error(0) - 1.0) < 1e-15);
  CHECK(std::abs(c.std_error(1) - 1.0) < 1e-15);
}

TEST_CASE("curve csv header and rows") {
  MatrixXd m(2, 2);
  m << 0, 1, 2, 3;
  std::ostringstream out;
  write_curve_csv(out, {adaptation_curve(m)}, {{"pearl", "short", "point"}});
  std::istringstream in(out.str());
  auto t = read_csv(in);
  CHECK(t.header == std::vector<std::string>{"episode", "mean_return", "stderr", "algorithm",
                                             "strategy", "env"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[1][0] == "2");
  CHECK(std::stod(t.rows[1][1]) == 2.0);
  CHECK(t.rows[1][3] == "pearl");
}

TEST_CASE("embedding csv round-trips") {
  nn::Rng rng(10);
  EmbeddingTable table;
  table.latent_dim = 2;
  table.has_variance = true;
  for (int i = 0; i < 5; ++i) table.append(i % 2, i, 4, nn::randn(4, 1, rng).col(0));
  std::stringstream ss;
  MatrixXd proj = nn::randn(5, 2, rng);
  write_embeddings_csv(ss, table, &proj);
  const std::string text = ss.str();
  CHECK(text.substr(0, text.find('\n')) == "task_id,run_id,episode,v1,v2,var1,var2,p1,p2");
  auto back = read_embeddings_csv(ss);
  CHECK(back.latent_dim == 2);
  CHECK(back.has_variance);
  CHECK(back.task_id == table.task_id);
  CHECK(back.values == table.values);
}

TEST_CASE("bootstrap interval brackets the estimate") {
  nn::Rng rng(11);
  std::vector<double> a, b;
  for (int i = 0; i < 30; ++i) {
    a.push_back(nn::randn(1, 1, rng)(0, 0) + 1.0);
    b.push_back(nn::randn(1, 1, rng)(0, 0));
  }
  auto ci = bootstrap_mean_diff(a, b, 1000, 0.95, 1);
  CHECK(ci.lo <= ci.estimate);
  CHECK(ci.estimate <= ci.hi);
  CHECK(ci.lo > 0.0);
  auto same = bootstrap_mean_diff({2, 2, 2}, {1, 1}, 200, 0.9, 2);
  CHECK(same.lo == 1.0);
  CHECK(same.hi == 1.0);
}
