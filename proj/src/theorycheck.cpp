// SPDX-License-Identifier: Apache-2.0
#include "bip/theorycheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "bip/common.hpp"

namespace bip::theory {

void validate(const LogitVector& logits) {
  if (logits.values.size() < 2) throw PreconditionError("logits: need K >= 2");
  if (logits.target >= logits.values.size()) throw PreconditionError("logits: target out of range");
  for (double v : logits.values) {
    if (!std::isfinite(v)) throw PreconditionError("logits: non-finite value");
  }
}

std::vector<double> softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(logits[i] - m));
  for (double& x : p) x /= z;
  return p;
}

std::vector<double> ce_gradient(const LogitVector& logits) {
  validate(logits);
  auto g = softmax(logits.values);
  g[logits.target] -= 1.0;
  return g;
}

double ce_loss(const LogitVector& logits) {
  validate(logits);
  const auto& s = logits.values;
  const double m = *std::max_element(s.begin(), s.end());
  double z = 0.0;
  for (double v : s) z += std::exp(v - m);
  return m + std::log(z) - s[logits.target];
}

std::vector<double> hessian_vector(std::span<const double> p, std::span<const double> v) {
  if (p.size() != v.size()) throw StructuralError("hessian_vector: size mismatch");
  const double pv = std::inner_product(p.begin(), p.end(), v.begin(), 0.0);
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i] * (v[i] - pv);
  return out;
}

LambdaMax hessian_lambda_max(std::span<const double> p, double tolerance, int max_iterations) {
  const std::size_t k = p.size();
  if (k == 2) return {2.0 * p[0] * p[1], 0};  // [[ab, -ab], [-ab, ab]] has eigenvalues 0 and 2ab

  // Start from e_j - p for the most likely class j, which overlaps the top
  // eigenvector whenever H is nonzero.
  const auto j = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
  std::vector<double> v(p.begin(), p.end());
  for (double& x : v) x = -x;
  v[j] += 1.0;
  double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  if (norm == 0.0) return {0.0, 0};
  for (double& x : v) x /= norm;

  double lambda = 0.0;
  for (int it = 1; it <= max_iterations; ++it) {
    auto hv = hessian_vector(p, v);
    const double next = std::inner_product(v.begin(), v.end(), hv.begin(), 0.0);
    norm = std::sqrt(std::inner_product(hv.begin(), hv.end(), hv.begin(), 0.0));
    if (norm == 0.0) return {0.0, it};
    for (std::size_t i = 0; i < k; ++i) v[i] = hv[i] / norm;
    if (it > 1 && std::abs(next - lambda) <= tolerance * std::max(1.0, next)) return {next, it};
    lambda = next;
  }
  throw ConvergenceError("hessian_lambda_max: power iteration did not converge");
}

HessianReport ce_hessian_lambda_max(const LogitVector& logits, double tolerance) {
  validate(logits);
  const auto p = softmax(logits.values);
  const std::size_t k = p.size();
  HessianReport r;
  r.k = k;
  r.hessian.resize(k * k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) r.hessian[i * k + j] = (i == j ? p[i] : 0.0) - p[i] * p[j];
  }
  r.lambda_max = hessian_lambda_max(p, tolerance).value;
  return r;
}

ModelPair build_models(const LogitVector& logits, double eta) {
  if (!(eta >= 0.0)) throw PreconditionError("build_models: eta must be non-negative");
  const auto grad = ce_gradient(logits);
  const auto hg = hessian_vector(softmax(logits.values), grad);
  ModelPair m{logits.values, {}};
  for (std::size_t i = 0; i < grad.size(); ++i) m.proxy[i] -= eta * grad[i];
  m.direct = m.proxy;
  for (std::size_t i = 0; i < grad.size(); ++i) m.direct[i] += 0.5 * eta * eta * hg[i];
  return m;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw StructuralError("kl_divergence: length mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) kl += p[i] * std::log(p[i] / std::max(q[i], 1e-300));
  }
  return kl;
}

double kl_from_logits(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw StructuralError("kl_from_logits: length mismatch");
  // log p_i - log q_i = d_i - log sum_j q_j e^{d_j}, d = a - b.
  const auto p = softmax(a);
  const auto q = softmax(b);
  double pd = 0.0;
  double shift = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    pd += p[i] * d;
    shift += q[i] * std::expm1(d);
  }
  return std::max(0.0, pd - std::log1p(shift));
}

TrialReport bound_trial(const LogitVector& logits, double eta) {
  if (!(eta > 0.0 && eta <= 0.5)) throw PreconditionError("bound_trial: eta must be in (0, 0.5]");
  const auto grad = ce_gradient(logits);
  const auto p = softmax(logits.values);
  const auto models = build_models(logits, eta);
  TrialReport r;
  r.eta = eta;
  r.k = logits.values.size();
  r.grad_norm_sq = std::inner_product(grad.begin(), grad.end(), grad.begin(), 0.0);
  r.lambda_max = hessian_lambda_max(p).value;
  r.kl = kl_from_logits(models.direct, models.proxy);
  r.bound = 0.5 * eta * eta * r.lambda_max * r.grad_norm_sq;
  r.residual = r.kl - r.bound;
  return r;
}

int TrialGrid::total_violations() const {
  int n = 0;
  for (const auto& c : cells) n += c.violations;
  return n;
}

TrialGrid run_trials(std::span<const std::size_t> k_values, std::span<const double> eta_values, int trials_per_cell,
                     std::uint64_t seed, double slack_constant) {
  if (trials_per_cell < 1) throw PreconditionError("run_trials: trials_per_cell must be >= 1");
  TrialGrid grid;
  grid.slack_constant = slack_constant;
  for (std::size_t k : k_values) {
    if (k < 2) throw PreconditionError("run_trials: K must be >= 2");
    std::vector<LogitVector> samples;
    samples.reserve(static_cast<std::size_t>(trials_per_cell));
    for (int t = 0; t < trials_per_cell; ++t) {
      Rng rng(derive_seed(derive_seed(seed, k), static_cast<std::uint64_t>(t)));
      LogitVector lv;
      lv.values.resize(k);
      for (double& v : lv.values) v = rng.normal();
      lv.target = static_cast<std::size_t>(rng.below(k));
      samples.push_back(std::move(lv));
    }
    for (double eta : eta_values) {
      CellSummary cell{k, eta, trials_per_cell, -std::numeric_limits<double>::infinity(), 0, 0.0, 0.0};
      const double slack = slack_constant * eta * eta * eta;
      for (const auto& lv : samples) {
        auto r = bound_trial(lv, eta);
        cell.max_residual = std::max(cell.max_residual, r.residual);
        if (r.kl > r.bound + slack) ++cell.violations;
        cell.mean_kl += r.kl;
        cell.mean_bound += r.bound;
        grid.trials.push_back(r);
      }
      cell.mean_kl /= trials_per_cell;
      cell.mean_bound /= trials_per_cell;
      grid.cells.push_back(cell);
    }
  }
  return grid;
}

double fitted_slope(const TrialGrid& grid, std::size_t k) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t n = 0;
  for (const auto& t : grid.trials) {
    if ((k != 0 && t.k != k) || !(t.kl > 0.0)) continue;
    const double x = std::log(t.eta), y = std::log(t.kl);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  const double denom = static_cast<double>(n) * sxx - sx * sx;
  if (n < 2 || denom == 0.0) throw PreconditionError("fitted_slope: need at least two distinct eta values");
  return (static_cast<double>(n) * sxy - sx * sy) / denom;
}

void write_csv(const TrialGrid& grid, std::ostream& out) {
  out << "k,eta,trials,max_residual,violations,mean_kl,mean_bound\n";
  for (const auto& c : grid.cells) {
    out << c.k << ',' << format_real(c.eta) << ',' << c.trials << ',' << format_real(c.max_residual) << ','
        << c.violations << ',' << format_real(c.mean_kl) << ',' << format_real(c.mean_bound) << '\n';
  }
}

}  // namespace bip::theory
