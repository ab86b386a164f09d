#pragma once

// Exact t-SNE (O(N^2) per iteration) with early exaggeration, momentum and
// per-coordinate adaptive gains. Once exaggeration ends the descent is kept
// monotone by restarting momentum whenever a step would increase the cost.

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "vllens/error.hpp"

namespace vllens {

struct TsneConfig {
  double perplexity = 30.0;
  int iterations = 1000;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  int exaggeration_iters = 250;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  int momentum_switch_iter = 250;
  double init_stddev = 1e-4;
  std::uint64_t seed = 42;
  int sigma_max_steps = 50;
  /// Tolerance on the conditional entropy, in bits.
  double entropy_tolerance = 1e-5;
  bool adaptive_gains = true;
  /// After early exaggeration, a step that would raise KL(P||Q) resets the
  /// momentum and gains and is replaced by a backtracked gradient step.
  bool monotone_restart = true;
  /// Record KL(P||Q) after every update.
  bool track_kl = false;
};

struct TsneResult {
  Eigen::MatrixX2d embedding;
  /// 2^H for each point's calibrated conditional distribution.
  Eigen::VectorXd perplexity;
  std::vector<double> kl_history;
};

struct ConditionalAffinities {
  Eigen::MatrixXd p;  // row i holds P(j | i)
  Eigen::VectorXd entropy_bits;
  Eigen::VectorXd beta;  // 1 / (2 sigma^2)
};

/// The perplexity actually used for N points: capped at (N-1)/3, or (N-1)/2
/// when that cap would not exceed 1.
inline double effective_perplexity(double requested, Eigen::Index n) {
  const double third = static_cast<double>(n - 1) / 3.0;
  const double cap = third > 1.0 ? third : static_cast<double>(n - 1) / 2.0;
  return std::min(requested, cap);
}

template <typename Derived>
Eigen::MatrixXd squared_distances(const Eigen::MatrixBase<Derived>& points) {
  const Eigen::MatrixXd x = points.template cast<double>();
  const Eigen::VectorXd norms = x.rowwise().squaredNorm();
  Eigen::MatrixXd d = (-2.0 * x * x.transpose()).colwise() + norms;
  d.rowwise() += norms.transpose();
  d = d.cwiseMax(0.0);
  d.diagonal().setZero();
  return d;
}

/// Per-row binary search on the Gaussian precision so that 2^H(P_i) matches
/// `perplexity`.
inline ConditionalAffinities conditional_affinities(const Eigen::MatrixXd& dist, double perplexity, int max_steps,
                                                    double entropy_tolerance) {
  const Eigen::Index n = dist.rows();
  const double target = std::log2(perplexity);
  ConditionalAffinities out{Eigen::MatrixXd::Zero(n, n), Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
  Eigen::VectorXd row(n);

  for (Eigen::Index i = 0; i < n; ++i) {
    // Shift by the nearest distance; conditional probabilities are invariant to it.
    double nearest = std::numeric_limits<double>::infinity();
    double mean = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) {
        nearest = std::min(nearest, dist(i, j));
        mean += dist(i, j);
      }
    mean = mean / static_cast<double>(n - 1) - nearest;

    double beta = mean > 0.0 ? 1.0 / mean : 1.0;
    double lo = 0.0, hi = std::numeric_limits<double>::infinity();
    double entropy = 0.0;
    for (int step = 0; step < max_steps; ++step) {
      double sum = 0.0, weighted = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) {
          row[j] = 0.0;
          continue;
        }
        const double shifted = dist(i, j) - nearest;
        row[j] = std::exp(-beta * shifted);
        sum += row[j];
        weighted += shifted * row[j];
      }
      entropy = (std::log(sum) + beta * weighted / sum) / std::log(2.0);
      row /= sum;
      const double diff = entropy - target;
      if (std::abs(diff) < entropy_tolerance) break;
      if (diff > 0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
    }
    out.p.row(i) = row.transpose();
    out.entropy_bits[i] = entropy;
    out.beta[i] = beta;
  }
  return out;
}

/// Symmetrised joint affinities (P_{j|i} + P_{i|j}) / 2N.
inline Eigen::MatrixXd joint_affinities(const ConditionalAffinities& cond) {
  const auto n = static_cast<double>(cond.p.rows());
  return (cond.p + cond.p.transpose()) / (2.0 * n);
}

/// Unnormalised Student-t kernel 1 / (1 + |y_i - y_j|^2) with zero diagonal.
inline Eigen::MatrixXd student_kernel(const Eigen::MatrixX2d& y) {
  Eigen::MatrixXd k = (1.0 + squared_distances(y).array()).inverse().matrix();
  k.diagonal().setZero();
  return k;
}

inline double kl_divergence(const Eigen::MatrixXd& p, const Eigen::MatrixX2d& y) {
  const Eigen::MatrixXd kernel = student_kernel(y);
  const double z = kernel.sum();
  double kl = 0.0;
  for (Eigen::Index j = 0; j < p.cols(); ++j)
    for (Eigen::Index i = 0; i < p.rows(); ++i)
      if (p(i, j) > 0.0) kl += p(i, j) * std::log(p(i, j) * z / kernel(i, j));
  return kl;
}

template <typename Derived>
TsneResult tsne(const Eigen::MatrixBase<Derived>& points, const TsneConfig& config) {
  const Eigen::Index n = points.rows();
  if (n < 4) throw TooFewPoints("t-SNE needs at least 4 points, got " + std::to_string(n));
  if (!points.allFinite()) throw NonFiniteInput("t-SNE input contains non-finite values");
  if (!(config.perplexity > 1.0) || config.iterations < 1 || !(config.learning_rate > 0.0) || !(config.early_exaggeration > 0.0))
    throw Error("invalid t-SNE configuration");
  const double perplexity = effective_perplexity(config.perplexity, n);
  if (!(perplexity < static_cast<double>(n))) throw Error("perplexity must be below the number of points");

  const auto cond = conditional_affinities(squared_distances(points), perplexity, config.sigma_max_steps, config.entropy_tolerance);
  const Eigen::MatrixXd p = joint_affinities(cond);

  TsneResult result;
  result.perplexity = cond.entropy_bits.unaryExpr([](double h) { return std::exp2(h); });

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> gauss(0.0, config.init_stddev);
  Eigen::MatrixX2d y(n, 2);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int c = 0; c < 2; ++c) y(i, c) = gauss(rng);

  // KL(P||Q) = sum p log p + log Z - sum p log k, with k the Student-t kernel.
  double p_log_p = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p.data()[i] > 0.0) p_log_p += p.data()[i] * std::log(p.data()[i]);
  auto kl_of = [&](const Eigen::MatrixXd& kernel, double z) {
    double cross = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i)
      if (p.data()[i] > 0.0) cross += p.data()[i] * std::log(kernel.data()[i]);
    return p_log_p + std::log(z) - cross;
  };

  Eigen::MatrixX2d update = Eigen::MatrixX2d::Zero(n, 2);
  Eigen::MatrixX2d gains = Eigen::MatrixX2d::Ones(n, 2);
  Eigen::MatrixXd kernel = student_kernel(y);
  double z = kernel.sum();
  double kl = kl_of(kernel, z);
  for (int iter = 0; iter < config.iterations; ++iter) {
    const bool exaggerating = iter < config.exaggeration_iters;
    const double exaggeration = exaggerating ? config.early_exaggeration : 1.0;
    const double momentum = iter < config.momentum_switch_iter ? config.initial_momentum : config.final_momentum;

    // dC/dy_i = 4 sum_j (p_ij - q_ij) k_ij (y_i - y_j)
    const Eigen::MatrixXd w = ((exaggeration * p).array() - kernel.array() / z).matrix().cwiseProduct(kernel);
    const Eigen::MatrixX2d grad = 4.0 * (w.rowwise().sum().asDiagonal() * y - w * y);

    if (config.adaptive_gains) {
      gains = (grad.array() * update.array() < 0.0).select(gains.array() + 0.2, gains.array() * 0.8).max(0.01).matrix();
    }
    update = momentum * update - config.learning_rate * gains.cwiseProduct(grad);
    Eigen::MatrixX2d next = y + update;
    Eigen::MatrixXd next_kernel = student_kernel(next);
    double next_z = next_kernel.sum();
    double next_kl = kl_of(next_kernel, next_z);

    if (config.monotone_restart && !exaggerating && next_kl > kl) {
      // Drop the accumulated velocity and backtrack along the plain gradient.
      update.setZero();
      gains.setOnes();
      double step = config.learning_rate;
      next = y;
      next_kernel = kernel;
      next_z = z;
      next_kl = kl;
      for (int attempt = 0; attempt < 40; ++attempt, step *= 0.5) {
        const Eigen::MatrixX2d trial = y - step * grad;
        Eigen::MatrixXd trial_kernel = student_kernel(trial);
        const double trial_z = trial_kernel.sum();
        const double trial_kl = kl_of(trial_kernel, trial_z);
        if (trial_kl <= kl) {
          update = trial - y;
          next = trial;
          next_kernel = std::move(trial_kernel);
          next_z = trial_z;
          next_kl = trial_kl;
          break;
        }
      }
    }

    y = std::move(next);
    y.rowwise() -= y.colwise().mean();  // translation leaves the kernel unchanged
    kernel = std::move(next_kernel);
    z = next_z;
    kl = next_kl;
    if (config.track_kl) result.kl_history.push_back(kl);
  }
  result.embedding = std::move(y);
  return result;
}

}  // namespace vllens
