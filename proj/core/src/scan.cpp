#include "stpd/simulate.hpp"

#include "stpd/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace stpd {

namespace {

std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

} // namespace

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t a, std::uint64_t b)
  : key_(splitmix64(splitmix64(splitmix64(seed) ^ a) ^ (b * 0xd1b54a32d192ed03ULL)))
{
}

std::uint64_t CounterRng::next_u64() { return splitmix64(key_ ^ splitmix64(counter_++)); }

double CounterRng::uniform()
{
  // 53 random bits, offset by half an ulp so 0 and 1 are never returned
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal()
{
  double const u1 = uniform(), u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t poisson_sample(double mean, CounterRng &rng)
{
  if (!(mean >= 0) || !std::isfinite(mean)) { throw ParameterError("poisson_sample: mean must be finite and >= 0"); }
  if (mean == 0.0) { return 0; }
  if (mean < 30.0) {
    double const u = rng.uniform();
    double p = std::exp(-mean);
    double cdf = p;
    std::uint64_t k = 0;
    while (u > cdf && k < 1000) {
      ++k;
      p *= mean / static_cast<double>(k);
      cdf += p;
    }
    return k;
  }

  // PTRS (Hoermann 1993)
  double const slam = std::sqrt(mean);
  double const loglam = std::log(mean);
  double const b = 0.931 + 2.53 * slam;
  double const a = -0.059 + 0.02483 * b;
  double const invalpha = 1.1239 + 1.1328 / (b - 3.4);
  double const vr = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    double const u = rng.uniform() - 0.5;
    double const v = rng.uniform();
    double const us = 0.5 - std::abs(u);
    double const k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= vr) { return static_cast<std::uint64_t>(k); }
    if (k < 0 || (us < 0.013 && v > us)) { continue; }
    if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <= -mean + k * loglam - std::lgamma(k + 1.0)) {
      return static_cast<std::uint64_t>(k);
    }
  }
}

ScanModel ScanModel::interpolated(FrameSchedule const &sched, double first, double last, double background_fraction)
{
  ScanModel m;
  m.background_fraction = background_fraction;
  auto const T = sched.size();
  double const t0 = sched[0].start_s;
  double const t1 = sched[T - 1].start_s;
  for (std::size_t t = 0; t < T; ++t) {
    double const w = T > 1 ? (sched[t].start_s - t0) / (t1 - t0) : 0.0;
    m.target_counts.push_back(first + (last - first) * w);
  }
  return m;
}

void ScanModel::validate(std::size_t n_frames) const
{
  if (target_counts.size() != n_frames) {
    throw ParameterError("scan model: " + std::to_string(target_counts.size()) + " count targets for " +
                         std::to_string(n_frames) + " frames");
  }
  for (double c : target_counts) {
    if (!(c >= 0) || !std::isfinite(c)) { throw ParameterError("scan model: count targets must be >= 0"); }
  }
  if (!(background_fraction >= 0 && background_fraction < 1)) {
    throw ParameterError("scan model: background fraction must lie in [0, 1)");
  }
}

namespace {

constexpr std::uint64_t kScanStream = 0x5343414eULL; // "SCAN"

} // namespace

template <typename Real>
ScanData<Real> simulate_scan(Tensor<Real> const &truth, Projector const &projector, ScanModel const &scan,
                             std::uint64_t seed)
{
  auto const &g = projector.geometry();
  if (truth.rank() != 3 || truth.dim(1) != g.image_size() || truth.dim(2) != g.image_size()) {
    throw ParameterError("simulate_scan: truth must be T x " + std::to_string(g.image_size()) + " x " +
                         std::to_string(g.image_size()) + ", got " + shape_string(truth.shape()));
  }
  auto const T = truth.dim(0);
  scan.validate(T);
  auto const rays = g.n_rays();

  ScanData<Real> out;
  Shape const shape{T, g.n_views(), g.n_bins()};
  out.counts = Tensor<Real>(shape);
  out.background = Tensor<Real>(shape);
  out.expected = Tensor<Real>(shape);
  out.frame_scale.assign(T, 0.0);

  for (std::size_t t = 0; t < T; ++t) {
    auto const src = truth.slab(t);
    std::vector<double> image(src.begin(), src.end());
    std::vector<double> proj(rays);
    projector.forward<double>(image, proj);
    double total = 0;
    for (double v : proj) { total += v; }

    double const trues = scan.target_counts[t] * (1.0 - scan.background_fraction);
    double const scale = trues > 0 ? (total > 0 ? trues / total : -1.0) : 0.0;
    if (scale < 0) { throw ParameterError("simulate_scan: cannot scale empty frame " + std::to_string(t)); }
    out.frame_scale[t] = scale;
    double const r = scan.target_counts[t] * scan.background_fraction / static_cast<double>(rays);

    auto bg = out.background.slab(t);
    auto ex = out.expected.slab(t);
    for (std::size_t i = 0; i < rays; ++i) {
      bg[i] = static_cast<Real>(r);
      ex[i] = static_cast<Real>(scale * proj[i] + r);
    }
  }

  parallel_for(T, [&](std::size_t t) {
    auto const ex = out.expected.slab(t);
    auto cn = out.counts.slab(t);
    for (std::size_t i = 0; i < rays; ++i) {
      CounterRng rng(seed ^ kScanStream, t, i);
      cn[i] = static_cast<Real>(poisson_sample(static_cast<double>(ex[i]), rng));
    }
  });
  return out;
}

template <typename Real>
NormalizedPair<Real> normalize_pair(Tensor<Real> const &sinograms, Tensor<Real> const &labels)
{
  auto max_of = [](Tensor<Real> const &t) {
    return t.empty() ? Real(0) : *std::max_element(t.data().begin(), t.data().end());
  };
  Real const smax = max_of(sinograms);
  Real const lmax = max_of(labels);
  if (!(smax > 0)) { throw ParameterError("normalize_pair: sinogram series is all zero"); }
  if (!(lmax > 0)) { throw ParameterError("normalize_pair: label series is all zero"); }

  NormalizedPair<Real> out{sinograms, labels, static_cast<double>(smax), static_cast<double>(lmax)};
  for (auto &v : out.sinograms.data()) { v /= smax; }
  for (auto &v : out.labels.data()) { v /= lmax; }
  return out;
}

template ScanData<float> simulate_scan(Tensor<float> const &, Projector const &, ScanModel const &, std::uint64_t);
template ScanData<double> simulate_scan(Tensor<double> const &, Projector const &, ScanModel const &, std::uint64_t);
template NormalizedPair<float> normalize_pair(Tensor<float> const &, Tensor<float> const &);
template NormalizedPair<double> normalize_pair(Tensor<double> const &, Tensor<double> const &);

} // namespace stpd
