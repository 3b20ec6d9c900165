#include "stpd/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace stpd {

bool Ellipse::contains(double x, double y) const
{
  double const a = angle_deg * std::numbers::pi / 180.0;
  double const ca = std::cos(a), sa = std::sin(a);
  double const dx = x - cx, dy = y - cy;
  double const u = (ca * dx + sa * dy) / semi_x;
  double const v = (-sa * dx + ca * dy) / semi_y;
  return u * u + v * v <= 1.0;
}

std::string to_string(RegionRole role)
{
  switch (role) {
  case RegionRole::Background: return "background";
  case RegionRole::Organ: return "organ";
  case RegionRole::Tumor: return "tumor";
  }
  return "organ";
}

namespace {

KineticParams rates(double K1, double k2, double k3, double k4, double vb)
{
  KineticParams k;
  k.K1 = K1;
  k.k2 = k2;
  k.k3 = k3;
  k.k4 = k4;
  k.blood_fraction = vb;
  k.input = InputFunction::feng();
  return k;
}

constexpr std::uint64_t kPhantomStream = 0x5048414e544f4dULL; // "PHANTOM"

} // namespace

PhantomSpec default_phantom_spec(std::size_t image_size, std::uint64_t seed, double variability)
{
  if (image_size < 2) { throw ParameterError("phantom: image_size must be >= 2"); }
  if (variability < 0) { throw ParameterError("phantom: variability must be >= 0"); }
  double const n = static_cast<double>(image_size);

  PhantomSpec spec;
  spec.image_size = image_size;
  spec.seed = seed;
  spec.regions = {
    {"body", RegionRole::Background, {0.0, 0.0, 0.40 * n, 0.34 * n, 0.0}, rates(0.05, 0.12, 0.03, 0.010, 0.03)},
    {"cortex", RegionRole::Organ, {-0.10 * n, -0.06 * n, 0.16 * n, 0.12 * n, 20.0},
     rates(0.11, 0.20, 0.07, 0.006, 0.05)},
    {"vessel", RegionRole::Organ, {0.16 * n, 0.12 * n, 0.06 * n, 0.05 * n, 0.0}, rates(0.60, 1.20, 0.0, 0.0, 0.6)},
    {"tumor", RegionRole::Tumor, {0.12 * n, -0.12 * n, 0.07 * n, 0.07 * n, 0.0}, rates(0.22, 0.25, 0.14, 0.0, 0.05)},
  };
  if (variability == 0.0) { return spec; }

  double const limit = 0.48 * n;
  for (std::size_t i = 0; i < spec.regions.size(); ++i) {
    CounterRng rng(seed, kPhantomStream, i);
    auto &r = spec.regions[i];
    auto &e = r.shape;
    e.cx += rng.normal() * variability * 0.04 * n;
    e.cy += rng.normal() * variability * 0.04 * n;
    e.semi_x *= std::exp(rng.normal() * variability * 0.15);
    e.semi_y *= std::exp(rng.normal() * variability * 0.15);
    e.angle_deg += rng.normal() * variability * 15.0;
    double const reach = std::hypot(e.cx, e.cy) + std::max(e.semi_x, e.semi_y);
    if (reach > limit) {
      double const shrink = std::max(0.1, (limit - std::hypot(e.cx, e.cy)) / std::max(e.semi_x, e.semi_y));
      e.semi_x *= shrink;
      e.semi_y *= shrink;
    }
    auto &k = r.kinetics;
    for (double *p : {&k.K1, &k.k2, &k.k3, &k.k4}) { *p *= std::exp(rng.normal() * variability * 0.25); }
  }
  return spec;
}

std::vector<std::uint8_t> Phantom::mask(std::int32_t label) const
{
  std::vector<std::uint8_t> m(labels.size());
  std::transform(labels.begin(), labels.end(), m.begin(), [&](auto l) { return l == label ? 1 : 0; });
  return m;
}

std::int32_t Phantom::label_of(PhantomSpec const &spec, RegionRole role) const
{
  for (std::size_t i = 0; i < spec.regions.size(); ++i) {
    if (spec.regions[i].role == role) { return static_cast<std::int32_t>(i + 1); }
  }
  return 0;
}

Phantom make_phantom(PhantomSpec const &spec, FrameSchedule const &sched)
{
  if (spec.regions.empty()) { throw ParameterError("phantom: no regions"); }
  if (spec.image_size < 2) { throw ParameterError("phantom: image_size must be >= 2"); }
  auto const n = spec.image_size;
  double const fov = 0.5 * static_cast<double>(n);
  for (auto const &r : spec.regions) {
    auto const &e = r.shape;
    if (!(e.semi_x > 0 && e.semi_y > 0)) { throw ParameterError("phantom: region '" + r.name + "' has empty shape"); }
    if (std::hypot(e.cx, e.cy) + std::max(e.semi_x, e.semi_y) > fov + 1e-9) {
      throw ParameterError("phantom: region '" + r.name + "' extends outside the field of view");
    }
  }

  Phantom ph;
  ph.image_size = n;
  ph.labels.assign(n * n, 0);
  double const centre = 0.5 * static_cast<double>(n - 1);
  for (std::size_t row = 0; row < n; ++row) {
    for (std::size_t col = 0; col < n; ++col) {
      double const x = static_cast<double>(col) - centre, y = static_cast<double>(row) - centre;
      for (std::size_t i = 0; i < spec.regions.size(); ++i) {
        if (spec.regions[i].shape.contains(x, y)) { ph.labels[row * n + col] = static_cast<std::int32_t>(i + 1); }
      }
    }
  }

  for (auto const &r : spec.regions) { ph.tacs.push_back(region_tacs(r.kinetics, sched)); }

  auto const T = sched.size();
  ph.activity = TensorD({T, n, n});
  for (std::size_t t = 0; t < T; ++t) {
    auto frame = ph.activity.slab(t);
    for (std::size_t j = 0; j < n * n; ++j) {
      auto const l = ph.labels[j];
      frame[j] = l == 0 ? 0.0 : ph.tacs[static_cast<std::size_t>(l - 1)][t];
    }
  }
  return ph;
}

} // namespace stpd
