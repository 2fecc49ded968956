#include "disentangle/count_distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace disentangle {

namespace {

// log P(I=k) + log P(R=k-delta); requires k >= max(delta, 0).
double log_joint_term(int k, int delta, const SkellamParams& params) {
  return poisson_log_pmf(k, params.lambda_in) + poisson_log_pmf(k - delta, params.lambda_out);
}

int support_start(int delta) { return std::max(delta, 0); }

// Location of the largest term in [k_min, k_max]. Successive term ratios are
// lambda_in*lambda_out / ((k+1)(k+1-delta)), which is decreasing in k, so the
// sequence is unimodal.
int joint_mode(int delta, const SkellamParams& params, int k_min, int k_max) {
  const double product = params.lambda_in.value() * params.lambda_out.value();
  const double root = 0.5 * (delta + std::sqrt(static_cast<double>(delta) * delta + 4.0 * product));
  double guess = std::floor(root) - 1.0;
  guess = std::clamp(guess, static_cast<double>(k_min), static_cast<double>(k_max));
  int mode = static_cast<int>(guess);
  while (mode < k_max && log_joint_term(mode + 1, delta, params) > log_joint_term(mode, delta, params)) {
    ++mode;
  }
  while (mode > k_min && log_joint_term(mode - 1, delta, params) > log_joint_term(mode, delta, params)) {
    --mode;
  }
  return mode;
}

}  // namespace

PoissonIntensity::PoissonIntensity(double value) : value_(value) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    std::ostringstream msg;
    msg << "Poisson intensity must be positive and finite, got " << value;
    throw DomainError(msg.str());
  }
}

DegenerateTableError::DegenerateTableError(int delta, double lambda_in, double lambda_out)
    : NumericalError([&] {
        std::ostringstream msg;
        msg << "degenerate conditional table: delta=" << delta << " lambda_in=" << lambda_in
            << " lambda_out=" << lambda_out;
        return msg.str();
      }()),
      delta_(delta),
      lambda_in_(lambda_in),
      lambda_out_(lambda_out) {}

double poisson_log_pmf(std::int64_t k, PoissonIntensity lambda) {
  if (k < 0) {
    throw DomainError("poisson_log_pmf: negative count " + std::to_string(k));
  }
  const double kd = static_cast<double>(k);
  const double lam = lambda.value();
  // k*log(lambda) is 0 for k = 0 regardless of lambda.
  const double k_log_lambda = k == 0 ? 0.0 : kd * std::log(lam);
  return k_log_lambda - lam - std::lgamma(kd + 1.0);
}

double skellam_pmf(int delta, const SkellamParams& params, int k_max) {
  const int k_min = support_start(delta);
  if (k_max < k_min + 10) {
    std::ostringstream msg;
    msg << "skellam_pmf: k_max=" << k_max << " must be at least max(delta,0)+10=" << k_min + 10;
    throw DomainError(msg.str());
  }
  const int mode = joint_mode(delta, params, k_min, k_max);
  const double reference = log_joint_term(mode, delta, params);
  if (!std::isfinite(reference)) {
    return 0.0;
  }
  double sum = 0.0;
  for (int k = k_min; k <= k_max; ++k) {
    sum += std::exp(log_joint_term(k, delta, params) - reference);
  }
  return std::exp(reference + std::log(sum));
}

double ConditionalJointTable::prob(int k) const {
  if (k < k_min || k > k_end()) {
    return 0.0;
  }
  return probs[static_cast<std::size_t>(k - k_min)];
}

double ConditionalJointTable::mean_arrivals() const {
  double mean = 0.0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    mean += probs[j] * static_cast<double>(k_min + static_cast<int>(j));
  }
  return mean;
}

ConditionalJointTable conditional_joint_table(int delta, const SkellamParams& params, int k_max) {
  ConditionalJointTable table;
  table.delta = delta;
  table.k_min = support_start(delta);
  table.k_max = k_max;
  if (k_max < table.k_min) {
    std::ostringstream msg;
    msg << "conditional_joint_table: k_max=" << k_max << " below support start " << table.k_min;
    throw DomainError(msg.str());
  }

  const int mode = joint_mode(delta, params, table.k_min, k_max);
  const double reference = log_joint_term(mode, delta, params);
  if (!std::isfinite(reference)) {
    throw DegenerateTableError(delta, params.lambda_in.value(), params.lambda_out.value());
  }

  double sum = 0.0;
  bool stopped_early = false;
  for (int k = table.k_min; k <= k_max; ++k) {
    const double term = std::exp(log_joint_term(k, delta, params) - reference);
    if (k > mode && sum + term == sum) {
      stopped_early = true;
      break;
    }
    table.probs.push_back(term);
    sum += term;
  }
  if (!(sum > 0.0) || !std::isfinite(sum)) {
    throw DegenerateTableError(delta, params.lambda_in.value(), params.lambda_out.value());
  }
  table.hit_bound = !stopped_early;
  for (double& p : table.probs) {
    p /= sum;
  }
  table.boundary_mass = table.hit_bound ? table.probs.back() : 0.0;
  return table;
}

JointDraw sample_joint(const ConditionalJointTable& table, RandomStream& rng) {
  const double u = rng.uniform();
  double cumulative = 0.0;
  int chosen = table.k_end();
  for (std::size_t j = 0; j < table.probs.size(); ++j) {
    cumulative += table.probs[j];
    if (u < cumulative) {
      chosen = table.k_min + static_cast<int>(j);
      break;
    }
  }
  // Rounding can leave cumulative slightly below 1; land on the last entry
  // with positive mass.
  while (chosen > table.k_min && table.prob(chosen) == 0.0) {
    --chosen;
  }
  return {chosen, chosen - table.delta};
}

}  // namespace disentangle
