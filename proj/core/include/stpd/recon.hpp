#pragma once

#include "stpd/projector.hpp"
#include "stpd/simulate.hpp"
#include "stpd/tensor.hpp"

#include <functional>
#include <span>

namespace stpd {

/// Poisson log-likelihood sum_i y_i log(ybar_i) - ybar_i (the log y! term is
/// dropped). Bins with ybar = 0 contribute 0 when y = 0 and -inf otherwise.
template <typename Real>
double poisson_log_likelihood(std::span<Real const> y, std::span<Real const> ybar);

/// 1 inside the field of view, 0 outside, replicated over `n_frames`.
template <typename Real>
Tensor<Real> fov_ones(ProjectorGeometry const &g, std::size_t n_frames);

/// Called after every iteration with the current estimate of one frame.
template <typename Real>
using FrameObserver = std::function<void(std::size_t frame, std::size_t iteration, std::span<Real const> image)>;

/// Frame-wise MLEM: x <- x / s * G*( y / (G x + r) ), s = G* 1.
///
/// y and background are T x V x B (background may be empty for r = 0), x0 is
/// T x H x W and must be strictly positive on every field-of-view pixel.
template <typename Real>
Tensor<Real> mlem(Tensor<Real> const &y,
                  Projector const &projector,
                  Tensor<Real> const &background,
                  std::size_t n_iter,
                  Tensor<Real> const &x0,
                  FrameObserver<Real> const &observer = {});

/// Row-normalised sparse H*W x H*W matrix.
struct SpatialKernel
{
  std::size_t n_pixels = 0;
  std::vector<std::size_t> row_ptr;
  std::vector<std::uint32_t> col;
  std::vector<double> weight;

  static SpatialKernel identity(std::size_t n_pixels);

  std::size_t row_nnz(std::size_t row) const { return row_ptr[row + 1] - row_ptr[row]; }

  /// out_j = sum_l K[j, l] in_l
  template <typename Real>
  void apply(std::span<Real const> in, std::span<Real> out) const;
  /// out_l = sum_j K[j, l] in_j
  template <typename Real>
  void apply_transpose(std::span<Real const> in, std::span<Real> out) const;
};

/// Row-normalised T x T matrix, banded to the temporal window.
struct TemporalKernel
{
  std::size_t n_frames = 0;
  std::size_t half_window = 0;
  std::vector<double> weight; ///< row-major T x T

  static TemporalKernel identity(std::size_t n_frames);
  /// Gaussian in frame index, sigma = window / 6, zero beyond (window-1)/2.
  static TemporalKernel gaussian(std::size_t n_frames, std::size_t window);

  double at(std::size_t t, std::size_t s) const { return weight[t * n_frames + s]; }
};

/// Separable spatial-temporal kernel: image = (Ks (x) Kt) alpha.
struct KernelOperator
{
  SpatialKernel spatial;
  TemporalKernel temporal;

  static KernelOperator identity(std::size_t n_pixels, std::size_t n_frames);

  /// T x H x W coefficients -> image: Kt across frames, then Ks across pixels.
  template <typename Real>
  Tensor<Real> apply(Tensor<Real> const &coefficients) const;
  /// Exact transpose of apply.
  template <typename Real>
  Tensor<Real> apply_transpose(Tensor<Real> const &image) const;
};

enum class SigmaMode
{
  LocalMean,  ///< sigma_j = mean distance from pixel j to its neighbours
  GlobalMean, ///< one sigma: mean neighbour distance over all pixels
};

struct KernelOptions
{
  std::size_t k_neighbors = 48;
  std::size_t window = 15;
  std::size_t search_radius = 4; ///< 9 x 9 neighbourhood
  SigmaMode sigma_mode = SigmaMode::LocalMean;
};

/// Builds Ks from per-pixel composite features (C x H x W) and Kt for
/// `n_frames`. Features are standardised per composite over the field of
/// view; each field-of-view row keeps itself plus its k-1 nearest
/// field-of-view neighbours (ties to the lowest pixel index). The search
/// window grows when the neighbourhood has too few candidates. Pixels outside
/// the field of view get identity rows.
KernelOperator build_st_kernel(TensorD const &composite,
                               ProjectorGeometry const &geometry,
                               std::size_t n_frames,
                               KernelOptions const &options);

/// Composite images: frames rebinned into `n_groups` equal-duration groups
/// by frame mid-time, each group summed and reconstructed by MLEM.
template <typename Real>
TensorD composite_images(Tensor<Real> const &y,
                         Tensor<Real> const &background,
                         FrameSchedule const &sched,
                         Projector const &projector,
                         std::size_t n_groups = 3,
                         std::size_t n_iter = 20);

/// Kernel EM on coefficients alpha with the operator G (Ks (x) Kt):
///   alpha <- alpha / (K^T s) * K^T G*( y / (G K alpha + r) ),
/// starting from alpha = 1 on the field of view. Returns K alpha.
/// The observer sees K alpha after every iteration (frame index = all frames,
/// reported as n_frames).
template <typename Real>
Tensor<Real> kem_st(Tensor<Real> const &y,
                    Projector const &projector,
                    KernelOperator const &kernel,
                    std::size_t n_iter,
                    Tensor<Real> const &background = {},
                    std::function<void(std::size_t iteration, Tensor<Real> const &image)> const &observer = {});

} // namespace stpd
