#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dpre {

struct SampleSummary {
  std::size_t count = 0;
  double mean = 0.0;
  double variance = 0.0;  // unbiased
  double se = 0.0;
  double median_of_means = 0.0;
};

// Mean, unbiased variance, standard error and a median-of-means over
// `blocks` contiguous blocks (blocks is clamped to the sample size).
SampleSummary summarize(std::span<const double> xs, std::size_t blocks = 10);

double median(std::vector<double> xs);
double quantile_of(std::vector<double> xs, double p);

// log(mean(exp(xs))) without overflow.
double log_mean_exp(std::span<const double> xs);

// Two-sided Student-t critical value t_{1-alpha/2, dof}.
double student_t_critical(double alpha, std::size_t dof);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double residual_sd = 0.0;
  std::size_t n = 0;
};

// Ordinary least squares y = intercept + slope * x.
LinearFit least_squares(std::span<const double> x, std::span<const double> y);

}  // namespace dpre
