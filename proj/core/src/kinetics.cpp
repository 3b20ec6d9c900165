#include "stpd/simulate.hpp"

#include <array>
#include <cmath>

namespace stpd {

FrameSchedule::FrameSchedule(std::vector<Frame> frames)
  : frames_(std::move(frames))
{
  if (frames_.empty()) { throw ParameterError("frame schedule: no frames"); }
  for (std::size_t i = 0; i < frames_.size(); ++i) {
    auto const &f = frames_[i];
    if (!(f.duration_s > 0) || !std::isfinite(f.duration_s)) {
      throw ParameterError("frame schedule: frame " + std::to_string(i) + " has non-positive duration");
    }
    if (f.start_s < 0) { throw ParameterError("frame schedule: negative start time"); }
    if (i > 0) {
      double const expect = frames_[i - 1].end_s();
      if (std::abs(f.start_s - expect) > 1e-9 * std::max(1.0, expect)) {
        throw ParameterError("frame schedule: frame " + std::to_string(i) + " is not contiguous");
      }
    }
  }
}

FrameSchedule FrameSchedule::from_groups(std::vector<std::pair<std::size_t, double>> const &groups)
{
  std::vector<Frame> frames;
  double t = 0;
  for (auto const &[count, duration] : groups) {
    for (std::size_t i = 0; i < count; ++i) {
      frames.push_back({t, duration});
      t += duration;
    }
  }
  return FrameSchedule(std::move(frames));
}

FrameSchedule FrameSchedule::standard() { return from_groups({{3, 60.0}, {9, 180.0}, {6, 300.0}}); }

double FrameSchedule::total_duration() const
{
  return frames_.empty() ? 0.0 : frames_.back().end_s() - frames_.front().start_s;
}

double InputFunction::operator()(double t) const
{
  if (t < 0) { return 0.0; }
  if (kind == Kind::Exponential) { return amplitude * std::exp(-t / tau_min); }
  return (a1 * t - a2 - a3) * std::exp(l1 * t) + a2 * std::exp(l2 * t) + a3 * std::exp(l3 * t);
}

InputFunction InputFunction::exponential(double amplitude, double tau_min)
{
  if (!(tau_min > 0)) { throw ParameterError("input function: tau must be > 0"); }
  InputFunction f;
  f.kind = Kind::Exponential;
  f.amplitude = amplitude;
  f.tau_min = tau_min;
  return f;
}

void KineticParams::validate() const
{
  for (double r : {K1, k2, k3, k4}) {
    if (!(r >= 0) || !std::isfinite(r)) { throw ParameterError("kinetic rates must be finite and >= 0"); }
  }
  if (!(blood_fraction >= 0 && blood_fraction < 1)) {
    throw ParameterError("blood fraction must lie in [0, 1)");
  }
}

namespace {

// (C1, C2, integral of C_T)
using State = std::array<double, 3>;

State derivative(KineticParams const &k, double t, State const &y)
{
  double const cp = k.input(t);
  double const c1 = y[0], c2 = y[1];
  double const d1 = k.K1 * cp - (k.k2 + k.k3) * c1 + k.k4 * c2;
  double const d2 = k.k3 * c1 - k.k4 * c2;
  double const ct = (1.0 - k.blood_fraction) * (c1 + c2) + k.blood_fraction * cp;
  return {d1, d2, ct};
}

State axpy(State const &y, double h, State const &d)
{
  return {y[0] + h * d[0], y[1] + h * d[1], y[2] + h * d[2]};
}

void rk4_advance(KineticParams const &k, double &t, State &y, double span_min, double step_min)
{
  if (span_min <= 0) { return; }
  auto const n = static_cast<std::size_t>(std::ceil(span_min / step_min - 1e-9));
  double const h = span_min / static_cast<double>(n);
  double const t0 = t;
  for (std::size_t i = 0; i < n; ++i) {
    double const ti = t0 + static_cast<double>(i) * h;
    State const k1 = derivative(k, ti, y);
    State const k2 = derivative(k, ti + 0.5 * h, axpy(y, 0.5 * h, k1));
    State const k3 = derivative(k, ti + 0.5 * h, axpy(y, 0.5 * h, k2));
    State const k4 = derivative(k, ti + h, axpy(y, h, k3));
    for (std::size_t j = 0; j < 3; ++j) { y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]); }
  }
  t = t0 + span_min;
}

} // namespace

std::vector<double> region_tacs(KineticParams const &k, FrameSchedule const &sched, double step_s)
{
  k.validate();
  if (!(step_s > 0)) { throw ParameterError("region_tacs: step must be > 0"); }
  if (sched.size() == 0) { throw ParameterError("region_tacs: empty schedule"); }
  double const step_min = step_s / 60.0;

  State y{0.0, 0.0, 0.0};
  double t = 0.0;
  rk4_advance(k, t, y, sched[0].start_s / 60.0, step_min);

  std::vector<double> tac;
  tac.reserve(sched.size());
  for (auto const &f : sched.frames()) {
    double const before = y[2];
    double const span = f.duration_s / 60.0;
    rk4_advance(k, t, y, span, step_min);
    tac.push_back((y[2] - before) / span);
  }
  return tac;
}

} // namespace stpd
