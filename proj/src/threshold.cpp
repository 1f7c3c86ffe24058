#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "vsi/errors.hpp"
#include "vsi/inversion.hpp"
#include "vsi/parallel.hpp"

namespace vsi::inversion {

namespace {

constexpr std::size_t kMinPoints = 6;

struct HingeFit {
  double breakpoint = 0.0;
  double level = 0.0;
  double slope = 0.0;
  double sse = HUGE_VAL;
};

// Least squares of y on (1, max(0, v - b)) for a fixed b.
HingeFit fit_hinge(std::span<const double> v, std::span<const double> y, double b) {
  double n = 0, sh = 0, shh = 0, sy = 0, shy = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double h = std::max(0.0, v[i] - b);
    n += 1;
    sh += h;
    shh += h * h;
    sy += y[i];
    shy += h * y[i];
  }
  HingeFit fit;
  fit.breakpoint = b;
  const double det = n * shh - sh * sh;
  if (!(det > 0.0))
    return fit;
  fit.slope = (n * shy - sh * sy) / det;
  fit.level = (sy - fit.slope * sh) / n;
  double sse = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double r = y[i] - fit.level - fit.slope * std::max(0.0, v[i] - b);
    sse += r * r;
  }
  fit.sse = sse;
  return fit;
}

HingeFit scan_breakpoints(std::span<const double> v, std::span<const double> y,
                          std::span<const double> candidates) {
  HingeFit best;
  for (double b : candidates) {
    const auto fit = fit_hinge(v, y, b);
    if (fit.sse < best.sse)
      best = fit;
  }
  return best;
}

std::vector<double> candidate_grid(std::span<const double> v, int subdivisions) {
  // Keep at least two points to the right of every candidate.
  std::vector<double> grid;
  const std::size_t last = v.size() - 2;
  for (std::size_t i = 0; i < last; ++i) {
    const double lo = v[i], hi = v[i + 1];
    if (hi == lo)
      continue;
    for (int k = 0; k < subdivisions; ++k)
      grid.push_back(lo + (hi - lo) * k / subdivisions);
  }
  grid.push_back(v[last]);
  return grid;
}

double stddev(std::span<const double> x) {
  if (x.size() < 2)
    return 0.0;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double ss = 0.0;
  for (double xi : x)
    ss += (xi - mean) * (xi - mean);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

} // namespace

ThresholdEstimate detect_threshold(std::span<const VoltageShift> data, double noise_sigma,
                                   const ThresholdOptions& options) {
  if (data.size() < kMinPoints)
    throw DegenerateDataError("detect_threshold needs >= 6 points");
  if (noise_sigma < 0.0)
    throw DomainError("noise sigma must be >= 0");

  std::vector<VoltageShift> sorted(data.begin(), data.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.voltage < b.voltage; });
  std::vector<double> v, y;
  for (const auto& p : sorted) {
    v.push_back(p.voltage);
    y.push_back(p.delta_f);
  }
  if (v.front() == v.back())
    throw DegenerateDataError("detect_threshold needs distinct voltages");

  const auto candidates = candidate_grid(v, std::max(1, options.subdivisions));
  const auto best = scan_breakpoints(v, y, candidates);

  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double sse_constant = 0.0;
  for (double yi : y)
    sse_constant += (yi - mean) * (yi - mean);
  if (!(sse_constant > 0.0) || (sse_constant - best.sse) < options.min_improvement * sse_constant)
    throw NoOnsetError("no breakpoint improves on a constant fit");

  ThresholdEstimate est;
  est.v_threshold = best.breakpoint;
  est.flat_level = best.level;
  est.slope = best.slope;
  est.sse = best.sse;
  est.sse_constant = sse_constant;
  double min_gap = v.back() - v.front();
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[i - 1])
      min_gap = std::min(min_gap, v[i] - v[i - 1]);
  est.grid_step = min_gap / std::max(1, options.subdivisions);
  est.onset_before_scan = best.breakpoint <= v.front();
  est.seed = options.seed;
  est.resamples = options.bootstrap_resamples;

  // Residual bootstrap around the fitted hinge.
  std::vector<double> fitted(v.size()), residuals(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    fitted[i] = best.level + best.slope * std::max(0.0, v[i] - best.breakpoint);
    residuals[i] = y[i] - fitted[i];
  }
  const double rms = std::sqrt(best.sse / static_cast<double>(v.size()));
  const bool gaussian_pool = rms == 0.0;
  if (!gaussian_pool && rms < noise_sigma)
    for (auto& r : residuals)
      r *= noise_sigma / rms;

  if (options.bootstrap_resamples > 1 && (!gaussian_pool || noise_sigma > 0.0)) {
    std::vector<double> breakpoints(static_cast<std::size_t>(options.bootstrap_resamples));
    parallel_for(breakpoints.size(), [&](std::size_t k) {
      std::mt19937_64 rng(derive_seed(options.seed, k));
      std::uniform_int_distribution<std::size_t> pick(0, residuals.size() - 1);
      std::normal_distribution<double> gauss(0.0, noise_sigma);
      std::vector<double> resampled(v.size());
      for (std::size_t i = 0; i < v.size(); ++i)
        resampled[i] = fitted[i] + (gaussian_pool ? gauss(rng) : residuals[pick(rng)]);
      breakpoints[k] = scan_breakpoints(v, resampled, candidates).breakpoint;
    });
    est.sigma_v = stddev(breakpoints);
  }
  return est;
}

} // namespace vsi::inversion
