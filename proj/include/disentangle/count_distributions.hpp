#pragma once

#include <cstdint>
#include <vector>

#include "disentangle/errors.hpp"
#include "disentangle/random.hpp"

namespace disentangle {

/// Expected count per day of a Poisson stream. Always positive and finite.
class PoissonIntensity {
 public:
  explicit PoissonIntensity(double value);
  double value() const { return value_; }

 private:
  double value_;
};

struct SkellamParams {
  PoissonIntensity lambda_in;
  PoissonIntensity lambda_out;
};

inline constexpr int kDefaultTruncation = 1000;

/// Thrown when every retained term of a conditional table is numerically zero
/// or non-finite.
class DegenerateTableError : public NumericalError {
 public:
  DegenerateTableError(int delta, double lambda_in, double lambda_out);
  int delta() const { return delta_; }
  double lambda_in() const { return lambda_in_; }
  double lambda_out() const { return lambda_out_; }

 private:
  int delta_;
  double lambda_in_;
  double lambda_out_;
};

/// Normalized distribution of (I = k, R = k - delta) given I - R = delta,
/// truncated to k in [k_min, k_max]. probs[j] is the probability of
/// k = k_min + j. The table stops early once further terms no longer change
/// the normalizer in double precision, so probs may be shorter than
/// k_max - k_min + 1.
struct ConditionalJointTable {
  int delta = 0;
  int k_min = 0;
  int k_max = 0;
  std::vector<double> probs;
  /// True when the scan reached k_max while terms were still contributing.
  bool hit_bound = false;
  /// Normalized probability of the last retained entry when hit_bound is set;
  /// a proxy for the mass lost to truncation.
  double boundary_mass = 0.0;

  int k_end() const { return k_min + static_cast<int>(probs.size()) - 1; }
  double prob(int k) const;
  double mean_arrivals() const;
};

struct JointDraw {
  int arrivals = 0;
  int departures = 0;
};

double poisson_log_pmf(std::int64_t k, PoissonIntensity lambda);

/// Truncated convolution sum_{k=max(delta,0)}^{k_max} P(I=k) P(R=k-delta).
double skellam_pmf(int delta, const SkellamParams& params, int k_max = kDefaultTruncation);

ConditionalJointTable conditional_joint_table(int delta, const SkellamParams& params,
                                              int k_max = kDefaultTruncation);

/// Inverse-CDF draw from the table. arrivals - departures == table.delta.
JointDraw sample_joint(const ConditionalJointTable& table, RandomStream& rng);

}  // namespace disentangle
