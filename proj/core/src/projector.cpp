#include "stpd/projector.hpp"

#include "stpd/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace stpd {

namespace {

double snap(double v) { return std::abs(v) < 1e-12 ? 0.0 : v; }

} // namespace

ProjectorGeometry::ProjectorGeometry(std::size_t n_views,
                                     std::size_t n_bins,
                                     std::size_t image_size,
                                     double pixel_size,
                                     double bin_spacing,
                                     std::optional<double> fov_radius)
  : n_views_(n_views)
  , n_bins_(n_bins)
  , image_size_(image_size)
  , pixel_size_(pixel_size)
  , bin_spacing_(bin_spacing)
{
  if (n_views < 1) { throw ParameterError("geometry: n_views must be >= 1"); }
  if (n_bins < 1) { throw ParameterError("geometry: n_bins must be >= 1"); }
  if (image_size < 2) { throw ParameterError("geometry: image_size must be >= 2"); }
  if (!(pixel_size > 0) || !std::isfinite(pixel_size)) { throw ParameterError("geometry: pixel_size must be > 0"); }
  if (!(bin_spacing > 0) || !std::isfinite(bin_spacing)) { throw ParameterError("geometry: bin_spacing must be > 0"); }
  fov_radius_ = fov_radius.value_or(0.5 * static_cast<double>(image_size) * pixel_size);
  if (!(fov_radius_ > 0)) { throw ParameterError("geometry: fov_radius must be > 0"); }

  angles_.resize(n_views);
  cos_.resize(n_views);
  sin_.resize(n_views);
  for (std::size_t v = 0; v < n_views; ++v) {
    angles_[v] = static_cast<double>(v) * std::numbers::pi / static_cast<double>(n_views);
    cos_[v] = snap(std::cos(angles_[v]));
    sin_[v] = snap(std::sin(angles_[v]));
  }

  fov_mask_.assign(n_pixels(), 0);
  double const r2 = fov_radius_ * fov_radius_ * (1.0 + 1e-12);
  for (std::size_t r = 0; r < image_size; ++r) {
    for (std::size_t c = 0; c < image_size; ++c) {
      double const x = pixel_x(c), y = pixel_y(r);
      if (x * x + y * y <= r2) {
        fov_mask_[r * image_size + c] = 1;
        ++fov_count_;
      }
    }
  }
}

double ProjectorGeometry::bin_position(std::size_t b) const
{
  return (static_cast<double>(b) - 0.5 * static_cast<double>(n_bins_ - 1)) * bin_spacing_;
}

double ProjectorGeometry::pixel_x(std::size_t col) const
{
  return (static_cast<double>(col) - 0.5 * static_cast<double>(image_size_ - 1)) * pixel_size_;
}

double ProjectorGeometry::pixel_y(std::size_t row) const { return pixel_x(row); }

bool ProjectorGeometry::operator==(ProjectorGeometry const &o) const
{
  return n_views_ == o.n_views_ && n_bins_ == o.n_bins_ && image_size_ == o.image_size_ &&
         pixel_size_ == o.pixel_size_ && bin_spacing_ == o.bin_spacing_ && fov_radius_ == o.fov_radius_;
}

ProjectorGeometry build_geometry(std::size_t n_views,
                                 std::size_t n_bins,
                                 std::size_t image_size,
                                 double pixel_size,
                                 double bin_spacing)
{
  return ProjectorGeometry(n_views, n_bins, image_size, pixel_size, bin_spacing);
}

// ---------------------------------------------------------------------------
// Siddon traversal

namespace {

struct Entry
{
  std::uint32_t pixel;
  double length;
};

void trace_ray(ProjectorGeometry const &g, std::size_t v, std::size_t b, std::vector<double> &alphas,
               std::vector<Entry> &out)
{
  out.clear();
  double const c = g.cos_angle(v), s = g.sin_angle(v);
  double const t = g.bin_position(b);
  auto const n = g.image_size();
  double const ps = g.pixel_size();
  double const lo = -0.5 * static_cast<double>(n) * ps;
  double const hi = -lo;
  double const half_len = std::sqrt(2.0) * hi + ps;

  // p(a) = p0 + a (p1 - p0), a in [0, 1], direction (-s, c)
  double const p0x = t * c + half_len * s, p0y = t * s - half_len * c;
  double const dx = -2.0 * half_len * s, dy = 2.0 * half_len * c;
  double const ray_len = 2.0 * half_len;

  double amin = 0.0, amax = 1.0;
  if (dx != 0.0) {
    double a0 = (lo - p0x) / dx, a1 = (hi - p0x) / dx;
    amin = std::max(amin, std::min(a0, a1));
    amax = std::min(amax, std::max(a0, a1));
  } else if (!(p0x >= lo && p0x < hi)) {
    return;
  }
  if (dy != 0.0) {
    double a0 = (lo - p0y) / dy, a1 = (hi - p0y) / dy;
    amin = std::max(amin, std::min(a0, a1));
    amax = std::min(amax, std::max(a0, a1));
  } else if (!(p0y >= lo && p0y < hi)) {
    return;
  }
  if (!(amax > amin)) { return; }

  alphas.clear();
  alphas.push_back(amin);
  alphas.push_back(amax);
  for (std::size_t k = 0; k <= n; ++k) {
    double const plane = lo + static_cast<double>(k) * ps;
    if (dx != 0.0) {
      double const a = (plane - p0x) / dx;
      if (a > amin && a < amax) { alphas.push_back(a); }
    }
    if (dy != 0.0) {
      double const a = (plane - p0y) / dy;
      if (a > amin && a < amax) { alphas.push_back(a); }
    }
  }
  std::sort(alphas.begin(), alphas.end());

  auto const last = static_cast<long>(n) - 1;
  for (std::size_t k = 0; k + 1 < alphas.size(); ++k) {
    double const da = alphas[k + 1] - alphas[k];
    if (da <= 0.0) { continue; }
    double const am = 0.5 * (alphas[k] + alphas[k + 1]);
    double const x = p0x + am * dx, y = p0y + am * dy;
    long const col = std::clamp(static_cast<long>(std::floor((x - lo) / ps)), 0L, last);
    long const row = std::clamp(static_cast<long>(std::floor((y - lo) / ps)), 0L, last);
    if (!g.in_fov(static_cast<std::size_t>(row), static_cast<std::size_t>(col))) { continue; }
    auto const pix = static_cast<std::uint32_t>(row * static_cast<long>(n) + col);
    double const len = da * ray_len;
    if (!out.empty() && out.back().pixel == pix) {
      out.back().length += len;
    } else {
      out.push_back({pix, len});
    }
  }
}

} // namespace

Projector::Projector(ProjectorGeometry geometry)
  : geometry_(std::move(geometry))
{
  auto const &g = geometry_;
  row_ptr_.reserve(g.n_rays() + 1);
  row_ptr_.push_back(0);
  std::vector<double> alphas;
  std::vector<Entry> entries;
  for (std::size_t v = 0; v < g.n_views(); ++v) {
    for (std::size_t b = 0; b < g.n_bins(); ++b) {
      trace_ray(g, v, b, alphas, entries);
      for (auto const &e : entries) {
        pixel_.push_back(e.pixel);
        length_.push_back(e.length);
      }
      row_ptr_.push_back(pixel_.size());
    }
  }
  length_f_.assign(length_.begin(), length_.end());

  sensitivity_.assign(g.n_pixels(), 0.0);
  for (std::size_t i = 0; i < pixel_.size(); ++i) { sensitivity_[pixel_[i]] += length_[i]; }
}

template <>
std::span<float const> Projector::weights<float>() const
{
  return length_f_;
}

template <>
std::span<double const> Projector::weights<double>() const
{
  return length_;
}

std::span<std::uint32_t const> Projector::ray_pixels(std::size_t ray) const
{
  return std::span<std::uint32_t const>(pixel_).subspan(row_ptr_[ray], row_ptr_[ray + 1] - row_ptr_[ray]);
}

std::span<double const> Projector::ray_lengths(std::size_t ray) const
{
  return std::span<double const>(length_).subspan(row_ptr_[ray], row_ptr_[ray + 1] - row_ptr_[ray]);
}

template <typename Real>
void Projector::forward(std::span<Real const> image, std::span<Real> sino) const
{
  if (image.size() != geometry_.n_pixels() || sino.size() != geometry_.n_rays()) {
    throw ParameterError("forward_project: frame size does not match geometry");
  }
  auto const w = weights<Real>();
  for (std::size_t i = 0; i < geometry_.n_rays(); ++i) {
    Real acc = 0;
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) { acc += w[k] * image[pixel_[k]]; }
    sino[i] = acc;
  }
}

template <typename Real>
void Projector::adjoint(std::span<Real const> sino, std::span<Real> image) const
{
  if (image.size() != geometry_.n_pixels() || sino.size() != geometry_.n_rays()) {
    throw ParameterError("back_project: frame size does not match geometry");
  }
  std::fill(image.begin(), image.end(), Real(0));
  auto const w = weights<Real>();
  for (std::size_t i = 0; i < geometry_.n_rays(); ++i) {
    Real const yi = sino[i];
    if (yi == Real(0)) { continue; }
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) { image[pixel_[k]] += w[k] * yi; }
  }
}

template void Projector::forward(std::span<float const>, std::span<float>) const;
template void Projector::forward(std::span<double const>, std::span<double>) const;
template void Projector::adjoint(std::span<float const>, std::span<float>) const;
template void Projector::adjoint(std::span<double const>, std::span<double>) const;

namespace {

std::size_t leading_frames(Shape const &shape, std::size_t rows, std::size_t cols, char const *what)
{
  if (shape.size() < 2 || shape[shape.size() - 2] != rows || shape[shape.size() - 1] != cols) {
    throw ParameterError(std::string(what) + ": expected trailing dimensions (" + std::to_string(rows) + "," +
                         std::to_string(cols) + "), got " + shape_string(shape));
  }
  return numel(shape) / (rows * cols);
}

} // namespace

template <typename Real>
Tensor<Real> forward_project(Projector const &p, Tensor<Real> const &image)
{
  auto const &g = p.geometry();
  auto const frames = leading_frames(image.shape(), g.image_size(), g.image_size(), "forward_project");
  Shape out_shape = image.shape();
  out_shape[out_shape.size() - 2] = g.n_views();
  out_shape[out_shape.size() - 1] = g.n_bins();
  Tensor<Real> out(out_shape);
  auto const in = image.data();
  auto const dst = out.data();
  parallel_for(frames, [&](std::size_t f) {
    p.forward<Real>(in.subspan(f * g.n_pixels(), g.n_pixels()), dst.subspan(f * g.n_rays(), g.n_rays()));
  });
  return out;
}

template <typename Real>
Tensor<Real> back_project(Projector const &p, Tensor<Real> const &sino)
{
  auto const &g = p.geometry();
  auto const frames = leading_frames(sino.shape(), g.n_views(), g.n_bins(), "back_project");
  Shape out_shape = sino.shape();
  out_shape[out_shape.size() - 2] = g.image_size();
  out_shape[out_shape.size() - 1] = g.image_size();
  Tensor<Real> out(out_shape);
  auto const in = sino.data();
  auto const dst = out.data();
  parallel_for(frames, [&](std::size_t f) {
    p.adjoint<Real>(in.subspan(f * g.n_rays(), g.n_rays()), dst.subspan(f * g.n_pixels(), g.n_pixels()));
  });
  return out;
}

template Tensor<float> forward_project(Projector const &, Tensor<float> const &);
template Tensor<double> forward_project(Projector const &, Tensor<double> const &);
template Tensor<float> back_project(Projector const &, Tensor<float> const &);
template Tensor<double> back_project(Projector const &, Tensor<double> const &);

// ---------------------------------------------------------------------------
// Dense oracle

double line_box_length(double cos_t, double sin_t, double s, double x0, double x1, double y0, double y1)
{
  // point on the line closest to the origin, unit direction (-sin, cos)
  double const px = s * cos_t, py = s * sin_t;
  double const dx = -sin_t, dy = cos_t;
  double tmin = -std::numeric_limits<double>::infinity();
  double tmax = std::numeric_limits<double>::infinity();
  if (dx != 0.0) {
    double const a = (x0 - px) / dx, b = (x1 - px) / dx;
    tmin = std::max(tmin, std::min(a, b));
    tmax = std::min(tmax, std::max(a, b));
  } else if (!(px >= x0 && px < x1)) {
    return 0.0;
  }
  if (dy != 0.0) {
    double const a = (y0 - py) / dy, b = (y1 - py) / dy;
    tmin = std::max(tmin, std::min(a, b));
    tmax = std::min(tmax, std::max(a, b));
  } else if (!(py >= y0 && py < y1)) {
    return 0.0;
  }
  return std::max(0.0, tmax - tmin);
}

DenseSystemMatrix dense_matrix(ProjectorGeometry const &g)
{
  std::size_t const total = g.n_rays() * g.n_pixels();
  if (total > kDenseMatrixLimit) {
    throw ParameterError("dense_matrix: " + std::to_string(total) + " entries exceeds the 2^26 limit");
  }
  DenseSystemMatrix m;
  m.rows = g.n_rays();
  for (std::size_t j = 0; j < g.n_pixels(); ++j) {
    if (g.fov_mask()[j]) { m.column_pixel.push_back(j); }
  }
  m.cols = m.column_pixel.size();
  m.entries.assign(m.rows * m.cols, 0.0);
  double const h = 0.5 * g.pixel_size();
  auto const n = g.image_size();
  for (std::size_t v = 0; v < g.n_views(); ++v) {
    for (std::size_t b = 0; b < g.n_bins(); ++b) {
      std::size_t const row = v * g.n_bins() + b;
      for (std::size_t c = 0; c < m.cols; ++c) {
        std::size_t const j = m.column_pixel[c];
        double const x = g.pixel_x(j % n), y = g.pixel_y(j / n);
        m.entries[row * m.cols + c] =
          line_box_length(g.cos_angle(v), g.sin_angle(v), g.bin_position(b), x - h, x + h, y - h, y + h);
      }
    }
  }
  return m;
}

std::vector<double> DenseSystemMatrix::apply(std::span<double const> image, std::size_t n_rays) const
{
  std::vector<double> out(n_rays, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) { acc += entries[r * cols + c] * image[column_pixel[c]]; }
    out[r] = acc;
  }
  return out;
}

std::vector<double> DenseSystemMatrix::apply_transpose(std::span<double const> sino, std::size_t n_pixels) const
{
  std::vector<double> out(n_pixels, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) { out[column_pixel[c]] += entries[r * cols + c] * sino[r]; }
  }
  return out;
}

} // namespace stpd
