// SPDX-License-Identifier: Apache-2.0
//
// Numerical check of the weak-to-strong KL bound: for cross-entropy on
// logits, the first-order proxy s - eta*grad and the second-order direct
// update s - eta*grad + (eta^2/2) H grad satisfy
//   KL(P_direct || P_proxy) <= (eta^2/2) * lambda_max(H) * |grad|^2 + O(eta^3).
#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

namespace bip::theory {

struct LogitVector {
  std::vector<double> values;
  std::size_t target = 0;
};

/// Throws PreconditionError unless K >= 2, values finite, target < K.
void validate(const LogitVector& logits);

std::vector<double> softmax(std::span<const double> logits);

/// softmax(logits) - onehot(target).
std::vector<double> ce_gradient(const LogitVector& logits);

/// -log softmax(logits)[target].
double ce_loss(const LogitVector& logits);

/// H v for H = diag(p) - p p^T, in O(K).
std::vector<double> hessian_vector(std::span<const double> p, std::span<const double> v);

struct LambdaMax {
  double value = 0.0;
  int iterations = 0;
};

/// Largest eigenvalue of diag(p) - p p^T. Closed form for K = 2, power
/// iteration otherwise; stops when the Rayleigh quotient moves by less than
/// tolerance * max(1, lambda). Throws ConvergenceError after max_iterations.
LambdaMax hessian_lambda_max(std::span<const double> p, double tolerance = 1e-10, int max_iterations = 1000000);

struct HessianReport {
  std::vector<double> hessian;  // row-major K x K
  std::size_t k = 0;
  double lambda_max = 0.0;
};

HessianReport ce_hessian_lambda_max(const LogitVector& logits, double tolerance = 1e-10);

struct ModelPair {
  std::vector<double> proxy;
  std::vector<double> direct;
};

/// proxy = s - eta*grad; direct = proxy + (eta^2/2) H grad.
ModelPair build_models(const LogitVector& logits, double eta);

/// Sum p log(p/q); q floored at 1e-300, zero p terms dropped.
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// KL(softmax(a) || softmax(b)) computed from d = a - b without forming the
/// probabilities' ratio, so it stays accurate when the two are nearly equal.
double kl_from_logits(std::span<const double> a, std::span<const double> b);

struct TrialReport {
  double eta = 0.0;
  std::size_t k = 0;
  double kl = 0.0;
  double bound = 0.0;
  double grad_norm_sq = 0.0;
  double lambda_max = 0.0;
  double residual = 0.0;  // kl - bound
};

TrialReport bound_trial(const LogitVector& logits, double eta);

struct CellSummary {
  std::size_t k = 0;
  double eta = 0.0;
  int trials = 0;
  double max_residual = 0.0;
  int violations = 0;
  double mean_kl = 0.0;
  double mean_bound = 0.0;
};

struct TrialGrid {
  std::vector<TrialReport> trials;
  std::vector<CellSummary> cells;
  double slack_constant = 10.0;
  int total_violations() const;
};

/// Standard-normal logits and uniform targets. Trial i of vocabulary size k
/// uses seed derive_seed(derive_seed(seed, k), i), so the same logits are
/// reused across the eta sweep. A violation is kl > bound + c * eta^3.
TrialGrid run_trials(std::span<const std::size_t> k_values, std::span<const double> eta_values, int trials_per_cell,
                     std::uint64_t seed, double slack_constant = 10.0);

/// Least-squares slope of log kl against log eta over trials with kl > 0.
/// With k set, only trials of that vocabulary size are used.
double fitted_slope(const TrialGrid& grid, std::size_t k = 0);

/// k,eta,trials,max_residual,violations,mean_kl,mean_bound
void write_csv(const TrialGrid& grid, std::ostream& out);

}  // namespace bip::theory
