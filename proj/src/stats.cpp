#include "dpre/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/students_t.hpp>

#include "dpre/error.hpp"

namespace dpre {

SampleSummary summarize(std::span<const double> xs, std::size_t blocks) {
  SampleSummary s;
  s.count = xs.size();
  if (xs.empty()) return s;
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t k = 0;
  for (double x : xs) {
    ++k;
    const double delta = x - mean;
    mean += delta / static_cast<double>(k);
    m2 += delta * (x - mean);
  }
  s.mean = mean;
  if (s.count > 1) {
    s.variance = m2 / static_cast<double>(s.count - 1);
    s.se = std::sqrt(s.variance / static_cast<double>(s.count));
  }
  blocks = std::clamp<std::size_t>(blocks, 1, s.count);
  std::vector<double> block_means;
  block_means.reserve(blocks);
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t lo = b * s.count / blocks;
    const std::size_t hi = (b + 1) * s.count / blocks;
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) acc += xs[i];
    block_means.push_back(acc / static_cast<double>(hi - lo));
  }
  s.median_of_means = median(std::move(block_means));
  return s;
}

double median(std::vector<double> xs) {
  if (xs.empty()) throw InsufficientDataError("median of empty sample");
  const std::size_t mid = xs.size() / 2;
  std::nth_element(xs.begin(), xs.begin() + mid, xs.end());
  if (xs.size() % 2 == 1) return xs[mid];
  const double upper = xs[mid];
  const double lower = *std::max_element(xs.begin(), xs.begin() + mid);
  return 0.5 * (lower + upper);
}

double quantile_of(std::vector<double> xs, double p) {
  if (xs.empty()) throw InsufficientDataError("quantile of empty sample");
  std::sort(xs.begin(), xs.end());
  const double pos = std::clamp(p, 0.0, 1.0) * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, xs.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return xs[lo] + frac * (xs[hi] - xs[lo]);
}

double log_mean_exp(std::span<const double> xs) {
  if (xs.empty()) throw InsufficientDataError("log_mean_exp of empty sample");
  const double m = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - m);
  return m + std::log(acc / static_cast<double>(xs.size()));
}

double student_t_critical(double alpha, std::size_t dof) {
  if (dof == 0) return std::numeric_limits<double>::infinity();
  boost::math::students_t dist(static_cast<double>(dof));
  return boost::math::quantile(boost::math::complement(dist, alpha / 2.0));
}

LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InsufficientDataError("least_squares: need >= 2 points");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw InsufficientDataError("least_squares: x values are all equal");
  LinearFit fit;
  fit.n = x.size();
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - fit.intercept - fit.slope * x[i];
    rss += r * r;
  }
  if (x.size() > 2) {
    fit.residual_sd = std::sqrt(rss / (n - 2.0));
    fit.slope_se = fit.residual_sd / std::sqrt(sxx);
  }
  return fit;
}

}  // namespace dpre
