#pragma once

#include "stpd/tensor.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace stpd {

/// 2D parallel-beam geometry.
///
/// Pixel (row r, col c) has its centre at
///   x = (c - (W-1)/2) * pixel_size,  y = (r - (H-1)/2) * pixel_size.
/// View v has angle theta_v = v * pi / V and bin b sits at the detector
/// coordinate s_b = (b - (B-1)/2) * bin_spacing. Ray (v, b) is the line
/// x cos(theta_v) + y sin(theta_v) = s_b. Pixels whose centre lies outside
/// fov_radius are masked: they have no system-matrix entries.
class ProjectorGeometry
{
public:
  ProjectorGeometry(std::size_t n_views,
                    std::size_t n_bins,
                    std::size_t image_size,
                    double pixel_size = 1.0,
                    double bin_spacing = 1.0,
                    std::optional<double> fov_radius = std::nullopt);

  std::size_t n_views() const { return n_views_; }
  std::size_t n_bins() const { return n_bins_; }
  std::size_t image_size() const { return image_size_; }
  std::size_t n_rays() const { return n_views_ * n_bins_; }
  std::size_t n_pixels() const { return image_size_ * image_size_; }
  double pixel_size() const { return pixel_size_; }
  double bin_spacing() const { return bin_spacing_; }
  double fov_radius() const { return fov_radius_; }

  std::vector<double> const &angles() const { return angles_; }
  /// cos/sin of each view angle, with |values| < 1e-12 snapped to exactly 0 so
  /// axis-aligned views are treated as exactly axis-aligned.
  double cos_angle(std::size_t v) const { return cos_[v]; }
  double sin_angle(std::size_t v) const { return sin_[v]; }
  double bin_position(std::size_t b) const;
  double pixel_x(std::size_t col) const;
  double pixel_y(std::size_t row) const;

  bool in_fov(std::size_t row, std::size_t col) const { return fov_mask_[row * image_size_ + col] != 0; }
  std::vector<std::uint8_t> const &fov_mask() const { return fov_mask_; }
  std::size_t fov_pixel_count() const { return fov_count_; }

  Shape image_shape() const { return {image_size_, image_size_}; }
  Shape sinogram_shape() const { return {n_views_, n_bins_}; }

  bool operator==(ProjectorGeometry const &o) const;

private:
  std::size_t n_views_, n_bins_, image_size_;
  double pixel_size_, bin_spacing_, fov_radius_;
  std::vector<double> angles_, cos_, sin_;
  std::vector<std::uint8_t> fov_mask_;
  std::size_t fov_count_ = 0;
};

ProjectorGeometry build_geometry(std::size_t n_views,
                                 std::size_t n_bins,
                                 std::size_t image_size,
                                 double pixel_size = 1.0,
                                 double bin_spacing = 1.0);

/// The system operator G and its exact adjoint G*. Siddon traversal of every
/// ray is done once at construction and stored as sparse rows; the adjoint
/// scatters the same rows, so <G x, y> = <x, G* y> holds to rounding.
class Projector
{
public:
  explicit Projector(ProjectorGeometry geometry);

  ProjectorGeometry const &geometry() const { return geometry_; }
  std::size_t nnz() const { return pixel_.size(); }

  /// One frame: image (H*W) -> sinogram (V*B). Overwrites `sino`.
  template <typename Real>
  void forward(std::span<Real const> image, std::span<Real> sino) const;

  /// One frame: sinogram (V*B) -> image (H*W). Overwrites `image`.
  template <typename Real>
  void adjoint(std::span<Real const> sino, std::span<Real> image) const;

  /// Entries of one ray: (pixel index, intersection length).
  std::span<std::uint32_t const> ray_pixels(std::size_t ray) const;
  std::span<double const> ray_lengths(std::size_t ray) const;

  /// G* 1 per pixel (the EM sensitivity image).
  std::vector<double> const &sensitivity() const { return sensitivity_; }

private:
  ProjectorGeometry geometry_;
  std::vector<std::size_t> row_ptr_;
  std::vector<std::uint32_t> pixel_;
  std::vector<double> length_;
  std::vector<float> length_f_;
  std::vector<double> sensitivity_;

  template <typename Real>
  std::span<Real const> weights() const;
};

/// Applies G to every trailing H x W frame of `image` (rank >= 2). The result
/// has the same leading dimensions followed by V x B.
template <typename Real>
Tensor<Real> forward_project(Projector const &p, Tensor<Real> const &image);

/// Applies G* to every trailing V x B frame of `sino` (rank >= 2).
template <typename Real>
Tensor<Real> back_project(Projector const &p, Tensor<Real> const &sino);

/// Explicit system matrix over the unmasked pixels. Entries are computed by
/// clipping every ray against every pixel square independently of the Siddon
/// traversal, so it can serve as an oracle for the operator.
struct DenseSystemMatrix
{
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> column_pixel; ///< image index of each column
  std::vector<double> entries;           ///< row-major rows x cols

  double at(std::size_t row, std::size_t col) const { return entries[row * cols + col]; }

  /// image (H*W) -> sinogram (V*B)
  std::vector<double> apply(std::span<double const> image, std::size_t n_rays) const;
  /// sinogram (V*B) -> image (H*W)
  std::vector<double> apply_transpose(std::span<double const> sino, std::size_t n_pixels) const;
};

inline constexpr std::size_t kDenseMatrixLimit = std::size_t{1} << 26;

/// Throws ParameterError when V*B*H*W exceeds kDenseMatrixLimit.
DenseSystemMatrix dense_matrix(ProjectorGeometry const &g);

/// Length of the line x cos + y sin = s inside the half-open square
/// [x0, x1) x [y0, y1).
double line_box_length(double cos_t, double sin_t, double s, double x0, double x1, double y0, double y1);

} // namespace stpd
