#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "vsi/device.hpp"
#include "vsi/errors.hpp"
#include "vsi/inversion.hpp"
#include "vsi/sensor.hpp"

using namespace vsi;
using namespace vsi::inversion;
using doctest::Approx;

namespace {

const sensor::StarkParams kSite1{-4.21, -0.09, -7.73};
const sensor::StarkParams kSite2{-5.60, -0.03, -0.67};

double relative(double a, double b) { return std::abs(a - b) / std::abs(b); }

void check_covariance(const FitResult& fit) {
  const auto& c = fit.covariance;
  REQUIRE(c.rows() == static_cast<Eigen::Index>(fit.values.size()));
  CHECK((c - c.transpose()).cwiseAbs().maxCoeff() == 0.0);
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    CHECK(c(i, i) >= 0.0);
    CHECK(fit.sigma[static_cast<std::size_t>(i)] == Approx(std::sqrt(c(i, i))));
  }
}

std::vector<VoltageShift> forward_onset(double x_um, const sensor::StarkParams& p, double offset = 0.0) {
  const auto stack = device::DeviceStack::reference_pin_diode();
  std::vector<VoltageShift> data;
  for (int v = 0; v <= 30; ++v) {
    const auto field = device::field_profile(stack, {static_cast<double>(v)});
    data.push_back({static_cast<double>(v), sensor::stark_shift(field.local_at(x_um), p) + offset});
  }
  return data;
}

} // namespace

// ------------------------------------------------------------------ Stark ---

TEST_CASE("fit_stark recovers noiseless parameters") {
  std::vector<StarkPoint> data;
  for (double e : {0.0, 8.0, 15.47, 25.48, 35.34})
    data.push_back({e, sensor::stark_shift(e, kSite1)});
  const auto fit = fit_stark(data);
  CHECK(relative(fit.value("d"), -4.21) < 1e-9);
  CHECK(relative(fit.value("alpha"), -0.09) < 1e-9);
  CHECK(relative(fit.value("f0"), -7.73) < 1e-9);
  check_covariance(fit);
}

TEST_CASE("fit_stark with noise and weights") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> noise(0.0, 0.5);
  std::vector<StarkPoint> data;
  std::vector<double> sig;
  for (int i = 0; i < 40; ++i) {
    const double e = 36.0 * i / 39.0;
    data.push_back({e, sensor::stark_shift(e, kSite1) + noise(rng)});
    sig.push_back(0.5);
  }
  const auto fit = fit_stark(data);
  const auto weighted = fit_stark(data, sig);
  CHECK(std::abs(fit.value("d") - (-4.21)) < 4 * fit.sigma_of("d"));
  CHECK(weighted.value("d") == Approx(fit.value("d")).epsilon(1e-10));
  check_covariance(fit);
  check_covariance(weighted);
  const auto p = to_stark_params(fit);
  CHECK(p.sigma_d == fit.sigma_of("d"));
}

TEST_CASE("fit_stark rejects degenerate data") {
  const StarkPoint two[] = {{1.0, 2.0}, {3.0, 4.0}};
  CHECK_THROWS_AS(fit_stark(two), DegenerateDataError);
  const StarkPoint repeated[] = {{1.0, 2.0}, {1.0, 2.1}, {3.0, 4.0}, {3.0, 4.2}};
  CHECK_THROWS_AS(fit_stark(repeated), DegenerateDataError);
}

TEST_CASE("reconstruct_field examples") {
  const double target = 15.47;
  CHECK(relative(reconstruct_field(sensor::stark_shift(target, kSite1), kSite1).e_local, target) < 1e-9);
  CHECK(reconstruct_field(kSite1.f0, kSite1).e_local == 0.0);
  const sensor::StarkParams linear{-4.0, 0.0, 1.5};
  CHECK(reconstruct_field(21.5, linear).e_local == (1.5 - 21.5) / -4.0);
  // beyond the vertex of the parabola there is no real root
  const sensor::StarkParams curved{-4.0, -0.1, 0.0};
  CHECK_THROWS_AS(reconstruct_field(-100.0, curved), OutOfRangeError);
}

TEST_CASE("reconstruct_field inverts stark_shift on the valid branch") {
  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> ud(-7.0, 7.0), ua(-0.12, 0.12), uf(-15.0, 15.0), ue(-50.0, 50.0);
  int checked = 0;
  while (checked < 1000) {
    const sensor::StarkParams p{ud(rng), ua(rng), uf(rng)};
    const double e = ue(rng);
    if (std::abs(p.d) < 0.5)
      continue;
    // valid branch: the shift is still monotone between 0 and E
    if ((p.d + p.alpha * e) * p.d <= 0.0)
      continue;
    const auto r = reconstruct_field(sensor::stark_shift(e, p), p);
    CHECK(std::abs(r.e_local - e) <= 1e-9 * std::max(1.0, std::abs(e)));
    ++checked;
  }
}

// -------------------------------------------------------------- threshold ---

TEST_CASE("detect_threshold on the forward-model onset at 2.71 um") {
  const auto data = forward_onset(2.71, kSite2);
  const auto est = detect_threshold(data, 0.005);
  CHECK_FALSE(est.onset_before_scan);
  CHECK(est.v_threshold + est.sigma_v >= 2.2);
  CHECK(est.v_threshold - est.sigma_v <= 3.0);
  CHECK(est.seed == kDefaultSeed);
  CHECK(est.resamples == 200);
  // determinism
  const auto again = detect_threshold(data, 0.005);
  CHECK(again.v_threshold == est.v_threshold);
  CHECK(again.sigma_v == est.sigma_v);
}

TEST_CASE("detect_threshold: no onset in flat data") {
  std::vector<VoltageShift> data;
  for (int v = 0; v <= 30; ++v)
    data.push_back({static_cast<double>(v), 0.0});
  CHECK_THROWS_AS(detect_threshold(data, 0.01), NoOnsetError);
}

TEST_CASE("detect_threshold: line through the origin has its onset at the grid minimum") {
  std::vector<VoltageShift> data;
  for (int v = 0; v <= 20; ++v)
    data.push_back({static_cast<double>(v), 3.0 * v});
  const auto est = detect_threshold(data, 0.0);
  CHECK(est.v_threshold == 0.0);
  CHECK(est.onset_before_scan);
}

TEST_CASE("detect_threshold is invariant under a constant offset") {
  const auto base = detect_threshold(forward_onset(2.71, kSite2), 0.005);
  for (double offset : {-50.0, 3.3, 120.0}) {
    const auto shifted = detect_threshold(forward_onset(2.71, kSite2, offset), 0.005);
    CHECK(std::abs(shifted.v_threshold - base.v_threshold) < base.grid_step);
  }
}

TEST_CASE("detect_threshold: emitter inside the zero-bias depletion zone") {
  const auto est = detect_threshold(forward_onset(1.61, kSite1), 0.005);
  CHECK(est.onset_before_scan);
}

TEST_CASE("detect_threshold needs six points") {
  const VoltageShift five[] = {{0, 0}, {1, 0}, {2, 0}, {3, 1}, {4, 2}};
  CHECK_THROWS_AS(detect_threshold(five, 0.1), DegenerateDataError);
}

// ----------------------------------------------------------------- doping ---

TEST_CASE("extract_doping") {
  device::MaterialParams m;
  CHECK(extract_doping(2.6, 2.71, 2.95, m) == Approx(8.068631095260572e14).epsilon(1e-12));
  CHECK(extract_doping(2.2, 2.96, 2.95, m) == Approx(6.275802461056957e14).epsilon(1e-12));
  CHECK(extract_doping(2.6, 4 * 2.71, 2.95, m) == Approx(extract_doping(2.6, 2.71, 2.95, m) / 16).epsilon(1e-14));
  CHECK_THROWS_AS(extract_doping(2.6, 0.0, 2.95, m), DomainError);
  CHECK_THROWS_AS(extract_doping(-3.0, 1.0, 2.95, m), DomainError);
}

TEST_CASE("doping_uncertainty") {
  device::MaterialParams m;
  const auto band = doping_uncertainty(2.6, 0.4, 2.71, 0.25, 2.95, m);
  CHECK(band.low == Approx(6.275802461056957e14).epsilon(1e-12));
  CHECK(band.mid == Approx(8.068631095260572e14).epsilon(1e-12));
  CHECK(band.high == Approx(1.049765291998971e15).epsilon(1e-12));
  const auto point = doping_uncertainty(2.6, 0.0, 2.71, 0.0, 2.95, m);
  CHECK(point.low == point.mid);
  CHECK(point.high == point.mid);

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> uv(0.0, 10.0), us(0.0, 1.0), ux(1.0, 4.0), usx(0.0, 0.5);
  for (int i = 0; i < 500; ++i) {
    const auto b = doping_uncertainty(uv(rng), us(rng), ux(rng), usx(rng), 2.95, m);
    CHECK(b.low <= b.mid);
    CHECK(b.mid <= b.high);
  }
}

namespace {

CvCurve constant_doping_curve(double n_d_cm3, double area_cm2, double v_lo, double v_hi, int points,
                              double v_bi = 1.2) {
  device::MaterialParams m;
  const double eps = m.permittivity();
  const double a = area_cm2 * 1e-4;
  const double q = 1.602176634e-19;
  CvCurve curve;
  curve.contact_area_cm2 = area_cm2;
  for (int i = 0; i < points; ++i) {
    const double v = v_lo + (v_hi - v_lo) * i / (points - 1);
    const double c = a * std::sqrt(q * eps * n_d_cm3 * 1e6 / (2.0 * (v_bi - v)));
    curve.samples.push_back({v, c});
  }
  return curve;
}

// Graded profile N(x) = N0 (1 + x / L). The depletion edge solves
// (q N0 / eps) (W^2 / 2 + W^3 / (3 L)) = V_bi - V; the CV formula reads N(W).
struct GradedOracle {
  double n0 = 5e20, length = 2e-6, v_bi = 1.2;
  double width(double v) const {
    device::MaterialParams m;
    const double k = 1.602176634e-19 * n0 / m.permittivity();
    double w = 1e-6;
    for (int it = 0; it < 100; ++it) {
      const double f = k * (w * w / 2 + w * w * w / (3 * length)) - (v_bi - v);
      const double df = k * (w + w * w / length);
      w -= f / df;
    }
    return w;
  }
  double doping_cm3(double v) const { return n0 * (1 + width(v) / length) / 1e6; }
};

double graded_error(int points) {
  GradedOracle g;
  device::MaterialParams m;
  const double area_cm2 = 9e-4;
  CvCurve curve;
  curve.contact_area_cm2 = area_cm2;
  for (int i = 0; i < points; ++i) {
    const double v = -10.0 + 10.0 * i / (points - 1);
    curve.samples.push_back({v, m.permittivity() * area_cm2 * 1e-4 / g.width(v)});
  }
  double worst = 0.0;
  for (const auto& p : cv_doping(curve, m))
    worst = std::max(worst, relative(p.n_d_cm3, g.doping_cm3(p.voltage)));
  return worst;
}

} // namespace

TEST_CASE("cv_doping recovers constant doping") {
  device::MaterialParams m;
  const double area = 9e-4; // (300 um)^2
  for (int points : {11, 41}) {
    const auto result = cv_doping(constant_doping_curve(8.7e14, area, -10.0, 0.0, points), m);
    CHECK(result.size() == static_cast<std::size_t>(points - 4));
    for (const auto& p : result) {
      CHECK_FALSE(p.flagged);
      CHECK(relative(p.n_d_cm3, 8.7e14) < 0.02);
    }
  }
}

TEST_CASE("cv_doping error shrinks with grid refinement") {
  const double coarse = graded_error(11);
  const double fine = graded_error(41);
  CHECK(fine < coarse);
  CHECK(fine < 0.02);
}

TEST_CASE("cv_doping area scaling and flat capacitance") {
  device::MaterialParams m;
  auto curve = constant_doping_curve(8.7e14, 9e-4, -10.0, 0.0, 15);
  const auto base = cv_doping(curve, m);
  curve.contact_area_cm2 *= 2.0;
  const auto doubled = cv_doping(curve, m);
  for (std::size_t i = 0; i < base.size(); ++i)
    CHECK(doubled[i].n_d_cm3 == Approx(base[i].n_d_cm3 / 4.0).epsilon(1e-12));

  CvCurve flat;
  flat.contact_area_cm2 = 9e-4;
  for (int i = 0; i < 9; ++i)
    flat.samples.push_back({-4.0 + i, 1e-11});
  for (const auto& p : cv_doping(flat, m))
    CHECK(p.flagged);

  CvCurve short_curve;
  short_curve.contact_area_cm2 = 9e-4;
  short_curve.samples = {{0, 1e-11}, {1, 1e-11}, {2, 1e-11}};
  CHECK_THROWS_AS(cv_doping(short_curve, m), DegenerateDataError);
}

// -------------------------------------------------------------- Lorentzian ---

TEST_CASE("fit_lorentzian: noiseless round trip") {
  const double fwhm = 0.0715, center = 1.234;
  std::vector<double> f, y;
  for (int i = 0; i < 121; ++i) {
    f.push_back(center - 0.4 + 0.8 * i / 120.0);
    y.push_back(30.0 + 900.0 * sensor::lorentzian(f.back(), center, fwhm));
  }
  const auto fit = fit_lorentzian(f, y);
  CHECK(relative(fit.value("fwhm"), fwhm) < 1e-6);
  CHECK(relative(fit.value("center"), center) < 1e-6);
  CHECK(relative(fit.value("amplitude"), 900.0) < 1e-6);
  CHECK(relative(fit.value("background"), 30.0) < 1e-6);
  check_covariance(fit);
}

TEST_CASE("fit_lorentzian recovers the PLE line width") {
  sensor::PleModel model;
  model.a1_center_ghz = 0.0;
  model.fwhm_mhz = 80.0;
  model.amplitude = 1000.0;
  model.background = 50.0;
  std::vector<double> f;
  for (int i = 0; i < 101; ++i)
    f.push_back(-0.5 + i * 0.01);
  const auto y = sensor::ple_spectrum(model, f);
  const auto fit = fit_lorentzian(f, y);
  // the A2 tail at +1 GHz biases the single-line fit only slightly
  CHECK(relative(fit.value("fwhm") * 1e3, 80.0) < 0.01);
}

TEST_CASE("fit_lorentzian: flat data fails") {
  std::vector<double> f, y;
  for (int i = 0; i < 50; ++i) {
    f.push_back(i);
    y.push_back(12.0);
  }
  CHECK_THROWS_AS(fit_lorentzian(f, y), FitFailedError);
  const double few[] = {1, 2, 3};
  CHECK_THROWS_AS(fit_lorentzian(few, few), DegenerateDataError);
}

TEST_CASE("fit_lorentzian under shot noise at SNR 20") {
  // bundled scan: 401 points over +-0.5 GHz, 400 peak counts over 20 background
  const double fwhm = 0.08, peak = 400.0, background = 20.0;
  std::vector<double> f;
  for (int i = 0; i < 401; ++i)
    f.push_back(-0.5 + i / 400.0);
  int within = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::mt19937_64 rng(1000 + trial);
    std::vector<double> y;
    for (double fi : f) {
      std::poisson_distribution<long> pd(background + peak * sensor::lorentzian(fi, 0.0, fwhm));
      y.push_back(static_cast<double>(pd(rng)));
    }
    const auto fit = fit_lorentzian(f, y);
    if (relative(fit.value("fwhm"), fwhm) < 0.05)
      ++within;
  }
  CHECK(within == 100);
}

// ------------------------------------------------------------ sensitivity ---

namespace {

CountTimeSeries poisson_series(double rate, double sample_rate, double duration, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::poisson_distribution<long> pd(rate / sample_rate);
  CountTimeSeries s;
  s.sample_rate_hz = sample_rate;
  s.duration_s = duration;
  const auto n = static_cast<std::size_t>(std::llround(sample_rate * duration));
  for (std::size_t i = 0; i < n; ++i)
    s.counts.push_back(static_cast<double>(pd(rng)));
  return s;
}

} // namespace

TEST_CASE("sensitivity properties") {
  CountTimeSeries constant{std::vector<double>(1000, 42.0), 100.0, 10.0};
  CHECK(sensitivity(constant, 1.2e4, 5.6).eta == 0.0);

  const auto series = poisson_series(1e4, 100.0, 20.0, 5);
  const auto base = sensitivity(series, 1.2e4, 5.6);
  CHECK(base.per_bin_std.size() == 20);
  CHECK(sensitivity(series, 1.2e4, 11.2).eta == Approx(base.eta / 2.0).epsilon(1e-12));
  CHECK(sensitivity(series, -3.0 * 1.2e4, -5.6).eta == Approx(base.eta / 3.0).epsilon(1e-12));

  auto shifted = series;
  for (auto& c : shifted.counts)
    c += 500.0;
  CHECK(sensitivity(shifted, 1.2e4, 5.6).eta == Approx(base.eta).epsilon(1e-9));

  // Per-bin std of Poisson rates is sqrt(lambda) * sample_rate.
  const double expected = std::sqrt(100.0) * 100.0 / (1.2e4 * 5.6) * 1e3;
  CHECK(relative(base.eta, expected) < 0.1);
  CHECK(base.uncertainty > 0.0);
}

TEST_CASE("sensitivity argument checks") {
  const auto series = poisson_series(1e4, 100.0, 5.0, 1);
  CHECK_THROWS_AS(sensitivity(series, 0.0, 5.6), DomainError);
  CHECK_THROWS_AS(sensitivity(series, 1.0, 0.0), DomainError);
  auto short_series = poisson_series(1e4, 100.0, 1.0, 1);
  CHECK_THROWS_AS(sensitivity(short_series, 1.0, 1.0), DomainError);
  auto mismatched = series;
  mismatched.duration_s = 9.0;
  CHECK_THROWS_AS(sensitivity(mismatched, 1.0, 1.0), DomainError);
}
