#pragma once

#include "stpd/projector.hpp"
#include "stpd/tensor.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace stpd {

// ---------------------------------------------------------------------------
// Frame schedule

struct Frame
{
  double start_s = 0;
  double duration_s = 0;
  double mid_s() const { return start_s + 0.5 * duration_s; }
  double end_s() const { return start_s + duration_s; }
};

/// Contiguous list of acquisition frames.
class FrameSchedule
{
public:
  FrameSchedule() = default;
  /// Throws ParameterError unless frames are non-empty, durations positive and
  /// each frame starts where the previous one ends.
  explicit FrameSchedule(std::vector<Frame> frames);

  /// Consecutive groups of (frame count, duration in seconds) starting at 0.
  static FrameSchedule from_groups(std::vector<std::pair<std::size_t, double>> const &groups);
  /// 3 x 60 s, 9 x 180 s, 6 x 300 s: 18 frames, 3600 s.
  static FrameSchedule standard();

  std::size_t size() const { return frames_.size(); }
  Frame const &operator[](std::size_t i) const { return frames_[i]; }
  std::vector<Frame> const &frames() const { return frames_; }
  double total_duration() const;

private:
  std::vector<Frame> frames_;
};

// ---------------------------------------------------------------------------
// Tracer kinetics

/// Plasma input function, time in minutes.
///
/// Feng:        Cp(t) = (a1 t - a2 - a3) e^{l1 t} + a2 e^{l2 t} + a3 e^{l3 t}
/// Exponential: Cp(t) = amplitude e^{-t / tau}
struct InputFunction
{
  enum class Kind
  {
    Feng,
    Exponential,
  };
  Kind kind = Kind::Feng;
  double a1 = 851.1225, a2 = 21.8798, a3 = 20.8113;
  double l1 = -4.133859, l2 = -0.01043449, l3 = -0.1190996;
  double amplitude = 0, tau_min = 1;

  double operator()(double t_min) const;

  static InputFunction feng() { return {}; }
  static InputFunction exponential(double amplitude, double tau_min);
  static InputFunction zero() { return exponential(0.0, 1.0); }
};

/// Two-tissue compartment rates (1/min) plus fractional blood volume.
struct KineticParams
{
  double K1 = 0, k2 = 0, k3 = 0, k4 = 0;
  double blood_fraction = 0;
  InputFunction input;

  void validate() const;
};

/// Frame-averaged tissue activity
///   C_T = (1 - vb) (C1 + C2) + vb Cp,
///   dC1/dt = K1 Cp - (k2 + k3) C1 + k4 C2,  dC2/dt = k3 C1 - k4 C2,
/// integrated from t = 0 with fixed-step RK4 (step_s seconds). The running
/// integral of C_T is carried as an extra ODE state so frame means are as
/// accurate as the state itself.
std::vector<double> region_tacs(KineticParams const &k, FrameSchedule const &sched, double step_s = 0.1);

// ---------------------------------------------------------------------------
// Phantoms

/// Ellipse in pixel units, centre measured from the image centre.
struct Ellipse
{
  double cx = 0, cy = 0;
  double semi_x = 1, semi_y = 1;
  double angle_deg = 0;

  bool contains(double x, double y) const;
};

enum class RegionRole
{
  Background,
  Organ,
  Tumor,
};

std::string to_string(RegionRole role);

struct Region
{
  std::string name;
  RegionRole role = RegionRole::Organ;
  Ellipse shape;
  KineticParams kinetics;
};

/// Regions are painted in order: a later region overrides earlier ones, so
/// nested structures are listed outermost first.
struct PhantomSpec
{
  std::vector<Region> regions;
  std::size_t image_size = 128;
  std::uint64_t seed = 0;
};

/// Rat-brain-like slice: body background, two organs and one tumour. With
/// variability > 0 the geometry and kinetic rates are jittered from `seed`,
/// which is how training/test populations are drawn.
PhantomSpec default_phantom_spec(std::size_t image_size, std::uint64_t seed = 0, double variability = 0.0);

struct Phantom
{
  TensorD activity;                ///< T x H x W
  std::vector<std::int32_t> labels; ///< H*W, 0 = no region, i+1 = spec.regions[i]
  std::vector<std::vector<double>> tacs;
  std::size_t image_size = 0;

  /// 1 where labels == label.
  std::vector<std::uint8_t> mask(std::int32_t label) const;
  /// Label of the first region with the given role; 0 when absent.
  std::int32_t label_of(PhantomSpec const &spec, RegionRole role) const;
};

Phantom make_phantom(PhantomSpec const &spec, FrameSchedule const &sched);

// ---------------------------------------------------------------------------
// Scan simulation

/// Deterministic counter-based random stream: the draws for (seed, a, b)
/// never depend on what other streams were consumed.
class CounterRng
{
public:
  CounterRng(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0);
  std::uint64_t next_u64();
  /// Uniform in (0, 1).
  double uniform();
  double normal();

private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Inversion for mean < 30, PTRS transformed rejection above.
std::uint64_t poisson_sample(double mean, CounterRng &rng);

struct ScanModel
{
  std::vector<double> target_counts; ///< expected events per frame
  double background_fraction = 0;    ///< uniform r as a fraction of the frame total

  /// Targets linear in frame start time from `first` (frame 0) to `last`.
  static ScanModel interpolated(FrameSchedule const &sched,
                                double first = 5000.0,
                                double last = 20000.0,
                                double background_fraction = 0.0);
  void validate(std::size_t n_frames) const;
};

template <typename Real>
struct ScanData
{
  Tensor<Real> counts;     ///< T x V x B Poisson draws
  Tensor<Real> background; ///< T x V x B expected r
  Tensor<Real> expected;   ///< T x V x B noiseless y-bar = s_t G x_t + r_t
  std::vector<double> frame_scale; ///< s_t: counts per unit of G x_t
};

template <typename Real>
ScanData<Real> simulate_scan(Tensor<Real> const &truth, Projector const &projector, ScanModel const &scan,
                             std::uint64_t seed);

template <typename Real>
struct NormalizedPair
{
  Tensor<Real> sinograms;
  Tensor<Real> labels;
  double sinogram_scale = 1; ///< the divisor applied to the sinograms
  double label_scale = 1;    ///< the divisor applied to the labels
};

/// Divides each series by its single maximum over all frames.
template <typename Real>
NormalizedPair<Real> normalize_pair(Tensor<Real> const &sinograms, Tensor<Real> const &labels);

} // namespace stpd
