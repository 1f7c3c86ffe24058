#include <cmath>
#include <numeric>

#include "vsi/errors.hpp"
#include "vsi/inversion.hpp"
#include "vsi/units.hpp"

namespace vsi::inversion {

void CountTimeSeries::validate() const {
  if (!(sample_rate_hz >= 1.0))
    throw DomainError("time series sample rate must be >= 1 Hz");
  if (!(duration_s >= 2.0))
    throw DomainError("time series must last >= 2 s");
  if (std::abs(duration_s * sample_rate_hz - static_cast<double>(counts.size())) > 1.0)
    throw DomainError("time series length disagrees with duration * rate");
  for (double c : counts)
    if (!(c >= 0.0))
      throw DomainError("time series counts must be >= 0");
}

SensitivityResult sensitivity(const CountTimeSeries& series, double gradient, double d) {
  series.validate();
  if (gradient == 0.0 || !std::isfinite(gradient))
    throw DomainError("sensitivity: PLE gradient must be non-zero");
  if (d == 0.0 || !std::isfinite(d))
    throw DomainError("sensitivity: dipole moment must be non-zero");

  const auto per_bin = static_cast<std::size_t>(std::llround(series.sample_rate_hz));
  const std::size_t bins = series.counts.size() / per_bin;
  if (bins < 2)
    throw DomainError("sensitivity: need at least two whole 1 s bins");

  // Mean-detrended count rate -> field fluctuation in kV/m.
  const double mean = std::accumulate(series.counts.begin(), series.counts.end(), 0.0) /
                      static_cast<double>(series.counts.size());
  const double to_field = series.sample_rate_hz / (std::abs(gradient) * std::abs(d)) * units::kKVPerMV;

  SensitivityResult result;
  result.per_bin_std.reserve(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    const auto first = series.counts.begin() + static_cast<std::ptrdiff_t>(b * per_bin);
    double bin_mean = 0.0;
    for (auto it = first; it != first + static_cast<std::ptrdiff_t>(per_bin); ++it)
      bin_mean += (*it - mean) * to_field;
    bin_mean /= static_cast<double>(per_bin);
    double ss = 0.0;
    for (auto it = first; it != first + static_cast<std::ptrdiff_t>(per_bin); ++it) {
      const double e = (*it - mean) * to_field - bin_mean;
      ss += e * e;
    }
    result.per_bin_std.push_back(per_bin > 1 ? std::sqrt(ss / static_cast<double>(per_bin - 1)) : 0.0);
  }

  const double nb = static_cast<double>(bins);
  result.eta = std::accumulate(result.per_bin_std.begin(), result.per_bin_std.end(), 0.0) / nb;
  double ss = 0.0;
  for (double s : result.per_bin_std)
    ss += (s - result.eta) * (s - result.eta);
  result.uncertainty = std::sqrt(ss / (nb - 1.0)) / std::sqrt(nb);
  return result;
}

} // namespace vsi::inversion
