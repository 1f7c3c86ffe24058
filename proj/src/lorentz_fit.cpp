#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <sstream>

#include "levenberg_marquardt.hpp"
#include "vsi/errors.hpp"
#include "vsi/inversion.hpp"

namespace vsi::inversion {

namespace {

constexpr std::size_t kMinLorentzPoints = 8;

struct Guess {
  double center, fwhm, amplitude, background;
};

// Linear interpolation of the abscissa where y crosses `level` between i and j.
double crossing(std::span<const double> x, std::span<const double> y, std::size_t i, std::size_t j,
                double level) {
  const double dy = y[j] - y[i];
  if (dy == 0.0)
    return 0.5 * (x[i] + x[j]);
  return x[i] + (level - y[i]) * (x[j] - x[i]) / dy;
}

Guess initial_guess(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  const std::size_t edge = std::max<std::size_t>(1, n / 10);
  double background = 0.0;
  for (std::size_t i = 0; i < edge; ++i)
    background += y[i] + y[n - 1 - i];
  background /= static_cast<double>(2 * edge);

  const auto peak = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
  const double amplitude = y[peak] - background;
  if (!(amplitude > 0.0))
    throw FitFailedError("fit_lorentzian: data has no peak above background");

  const double half = background + 0.5 * amplitude;
  std::optional<double> left, right;
  for (std::size_t i = peak; i > 0; --i)
    if (y[i - 1] < half) {
      left = crossing(x, y, i - 1, i, half);
      break;
    }
  for (std::size_t i = peak; i + 1 < n; ++i)
    if (y[i + 1] < half) {
      right = crossing(x, y, i, i + 1, half);
      break;
    }

  double fwhm;
  if (left && right)
    fwhm = *right - *left;
  else if (left)
    fwhm = 2.0 * (x[peak] - *left);
  else if (right)
    fwhm = 2.0 * (*right - x[peak]);
  else
    fwhm = 0.25 * (x.back() - x.front());
  if (!(fwhm > 0.0))
    fwhm = 2.0 * std::abs(x[std::min(peak + 1, n - 1)] - x[peak > 0 ? peak - 1 : 0]);
  return {x[peak], fwhm, amplitude, background};
}

} // namespace

FitResult fit_lorentzian(std::span<const double> freqs, std::span<const double> counts,
                         std::span<const double> sigmas, const LorentzianFitOptions& options) {
  if (freqs.size() != counts.size())
    throw DomainError("fit_lorentzian: frequency and count lengths differ");
  if (!sigmas.empty() && sigmas.size() != counts.size())
    throw DomainError("fit_lorentzian: sigma count does not match data");
  if (freqs.size() < kMinLorentzPoints)
    throw DegenerateDataError("fit_lorentzian needs >= 8 points");

  // Work on a frequency-sorted copy.
  std::vector<std::size_t> order(freqs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return freqs[a] < freqs[b]; });
  std::vector<double> x, y, w;
  for (auto i : order) {
    x.push_back(freqs[i]);
    y.push_back(counts[i]);
    if (!sigmas.empty()) {
      if (!(sigmas[i] > 0.0))
        throw DomainError("fit_lorentzian: sigmas must be > 0");
      w.push_back(1.0 / sigmas[i]);
    } else {
      w.push_back(1.0);
    }
  }
  const double span = x.back() - x.front();
  if (!(span > 0.0))
    throw DegenerateDataError("fit_lorentzian: frequencies do not span an interval");

  const auto guess = initial_guess(x, y);
  Eigen::VectorXd p0(4);
  p0 << guess.center, guess.fwhm, guess.amplitude, guess.background;

  const int n = static_cast<int>(x.size());
  auto residuals = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd& jac) {
    const double c = p(0), g = p(1), a = p(2), b = p(3);
    for (int i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i);
      const double dx = x[k] - c;
      const double u = 2.0 * dx / g;
      const double l = 1.0 / (1.0 + u * u);
      const double l2 = l * l;
      r(i) = w[k] * (b + a * l - y[k]);
      // dl/dc = 8 dx / g^2 * l^2 ; dl/dg = 8 dx^2 / g^3 * l^2
      jac(i, 0) = w[k] * a * 8.0 * dx / (g * g) * l2;
      jac(i, 1) = w[k] * a * 8.0 * dx * dx / (g * g * g) * l2;
      jac(i, 2) = w[k] * l;
      jac(i, 3) = w[k];
    }
  };

  detail::LmSettings settings;
  settings.max_iterations = options.max_iterations;
  settings.initial_damping = options.initial_damping;
  settings.tolerance = options.tolerance;
  const auto outcome = detail::levenberg_marquardt(residuals, p0, n, settings);

  auto fail = [&](const std::string& why) {
    std::ostringstream msg;
    msg << "fit_lorentzian: " << why << " (iterations=" << outcome.iterations << ", sse=" << outcome.sse
        << ", damping=" << outcome.damping << ", center=" << outcome.params(0)
        << ", fwhm=" << outcome.params(1) << ", amplitude=" << outcome.params(2) << ")";
    throw FitFailedError(msg.str());
  };
  if (!outcome.converged)
    fail("no convergence");
  if (!outcome.params.allFinite())
    fail("non-finite parameters");
  const double fwhm = std::abs(outcome.params(1));
  if (!(outcome.params(2) > 0.0))
    fail("fitted amplitude is not positive");
  if (!(fwhm > 0.0) || fwhm >= span)
    fail("fitted width is not resolved by the scan");
  if (outcome.params(0) < x.front() || outcome.params(0) > x.back())
    fail("fitted centre lies outside the scan");

  FitResult fit;
  fit.names = {"center", "fwhm", "amplitude", "background"};
  fit.values = {outcome.params(0), fwhm, outcome.params(2), outcome.params(3)};
  fit.residual_sse = outcome.sse;
  fit.iterations = outcome.iterations;

  Eigen::MatrixXd cov = outcome.jtj.completeOrthogonalDecomposition().pseudoInverse();
  if (sigmas.empty())
    cov *= n > 4 ? outcome.sse / (n - 4) : 0.0;
  fit.covariance = 0.5 * (cov + cov.transpose());
  for (int i = 0; i < 4; ++i)
    fit.sigma.push_back(std::sqrt(std::max(0.0, fit.covariance(i, i))));
  return fit;
}

FitResult fit_odmr_peak(const sensor::OdmrSpectrum& spectrum) {
  const auto& f = spectrum.mw_frequencies;
  const auto& p = spectrum.transfer_population;
  if (f.size() != p.size() || f.size() < kMinLorentzPoints)
    throw DegenerateDataError("fit_odmr_peak needs >= 8 spectrum points");

  // Main lobe: walk down from the global maximum to the adjacent minima.
  const auto peak = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
  std::size_t lo = peak, hi = peak;
  while (lo > 0 && p[lo - 1] < p[lo])
    --lo;
  while (hi + 1 < p.size() && p[hi + 1] < p[hi])
    ++hi;
  // Keep the lobe symmetric about the peak so the fit centre is not pulled.
  const std::size_t reach = std::min(peak - lo, hi - peak);
  lo = peak - reach;
  hi = peak + reach;
  while (hi - lo + 1 < kMinLorentzPoints) {
    if (lo == 0 || hi + 1 == p.size())
      throw DegenerateDataError("fit_odmr_peak: main lobe is under-resolved");
    --lo;
    ++hi;
  }
  const std::span<const double> xs(f.data() + lo, hi - lo + 1);
  const std::span<const double> ys(p.data() + lo, hi - lo + 1);
  return fit_lorentzian(xs, ys);
}

} // namespace vsi::inversion
