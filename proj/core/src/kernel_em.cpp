#include "em_detail.hpp"
#include "stpd/parallel.hpp"
#include "stpd/recon.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace stpd {

SpatialKernel SpatialKernel::identity(std::size_t n_pixels)
{
  SpatialKernel k;
  k.n_pixels = n_pixels;
  k.row_ptr.resize(n_pixels + 1);
  k.col.resize(n_pixels);
  k.weight.assign(n_pixels, 1.0);
  for (std::size_t j = 0; j <= n_pixels; ++j) { k.row_ptr[j] = j; }
  for (std::size_t j = 0; j < n_pixels; ++j) { k.col[j] = static_cast<std::uint32_t>(j); }
  return k;
}

template <typename Real>
void SpatialKernel::apply(std::span<Real const> in, std::span<Real> out) const
{
  for (std::size_t j = 0; j < n_pixels; ++j) {
    Real acc = 0;
    for (std::size_t k = row_ptr[j]; k < row_ptr[j + 1]; ++k) { acc += static_cast<Real>(weight[k]) * in[col[k]]; }
    out[j] = acc;
  }
}

template <typename Real>
void SpatialKernel::apply_transpose(std::span<Real const> in, std::span<Real> out) const
{
  std::fill(out.begin(), out.end(), Real(0));
  for (std::size_t j = 0; j < n_pixels; ++j) {
    for (std::size_t k = row_ptr[j]; k < row_ptr[j + 1]; ++k) { out[col[k]] += static_cast<Real>(weight[k]) * in[j]; }
  }
}

TemporalKernel TemporalKernel::identity(std::size_t n_frames) { return gaussian(n_frames, 1); }

TemporalKernel TemporalKernel::gaussian(std::size_t n_frames, std::size_t window)
{
  if (n_frames < 1) { throw ParameterError("temporal kernel: n_frames must be >= 1"); }
  if (window < 1 || window % 2 == 0) { throw ParameterError("temporal kernel: window must be odd and >= 1"); }
  TemporalKernel k;
  k.n_frames = n_frames;
  k.half_window = (window - 1) / 2;
  k.weight.assign(n_frames * n_frames, 0.0);
  double const sigma = static_cast<double>(window) / 6.0;
  for (std::size_t t = 0; t < n_frames; ++t) {
    double sum = 0;
    for (std::size_t s = 0; s < n_frames; ++s) {
      auto const d = static_cast<double>(t > s ? t - s : s - t);
      if (d > static_cast<double>(k.half_window)) { continue; }
      double const w = std::exp(-d * d / (2.0 * sigma * sigma));
      k.weight[t * n_frames + s] = w;
      sum += w;
    }
    for (std::size_t s = 0; s < n_frames; ++s) { k.weight[t * n_frames + s] /= sum; }
  }
  return k;
}

KernelOperator KernelOperator::identity(std::size_t n_pixels, std::size_t n_frames)
{
  return {SpatialKernel::identity(n_pixels), TemporalKernel::identity(n_frames)};
}

namespace {

template <typename Real>
void check_kernel_shape(KernelOperator const &k, Tensor<Real> const &t)
{
  if (t.rank() != 3 || t.dim(0) != k.temporal.n_frames || t.dim(1) * t.dim(2) != k.spatial.n_pixels) {
    throw ParameterError("kernel operator: series shape " + shape_string(t.shape()) + " does not match kernel (" +
                         std::to_string(k.temporal.n_frames) + " frames, " + std::to_string(k.spatial.n_pixels) +
                         " pixels)");
  }
}

// out_t = sum_s w(t, s) in_s, or the transpose
template <typename Real>
Tensor<Real> temporal_mix(TemporalKernel const &k, Tensor<Real> const &in, bool transpose)
{
  auto const T = k.n_frames;
  auto const hw = k.half_window;
  Tensor<Real> out(in.shape());
  for (std::size_t t = 0; t < T; ++t) {
    auto dst = out.slab(t);
    std::size_t const lo = t > hw ? t - hw : 0;
    std::size_t const hi = std::min(T - 1, t + hw);
    for (std::size_t s = lo; s <= hi; ++s) {
      auto const w = static_cast<Real>(transpose ? k.at(s, t) : k.at(t, s));
      auto const src = in.slab(s);
      for (std::size_t j = 0; j < dst.size(); ++j) { dst[j] += w * src[j]; }
    }
  }
  return out;
}

} // namespace

template <typename Real>
Tensor<Real> KernelOperator::apply(Tensor<Real> const &coefficients) const
{
  check_kernel_shape(*this, coefficients);
  Tensor<Real> mixed = temporal_mix(temporal, coefficients, false);
  Tensor<Real> out(coefficients.shape());
  parallel_for(temporal.n_frames, [&](std::size_t t) { spatial.apply<Real>(mixed.slab(t), out.slab(t)); });
  return out;
}

template <typename Real>
Tensor<Real> KernelOperator::apply_transpose(Tensor<Real> const &image) const
{
  check_kernel_shape(*this, image);
  Tensor<Real> spread(image.shape());
  parallel_for(temporal.n_frames, [&](std::size_t t) { spatial.apply_transpose<Real>(image.slab(t), spread.slab(t)); });
  return temporal_mix(temporal, spread, true);
}

// ---------------------------------------------------------------------------

KernelOperator build_st_kernel(TensorD const &composite,
                               ProjectorGeometry const &geometry,
                               std::size_t n_frames,
                               KernelOptions const &options)
{
  auto const n = geometry.image_size();
  auto const npix = geometry.n_pixels();
  if (composite.rank() != 3 || composite.dim(1) != n || composite.dim(2) != n) {
    throw ParameterError("build_st_kernel: composite must be C x " + std::to_string(n) + " x " + std::to_string(n) +
                         ", got " + shape_string(composite.shape()));
  }
  auto const &mask = geometry.fov_mask();
  auto const nfov = geometry.fov_pixel_count();
  if (options.k_neighbors < 1) { throw ParameterError("build_st_kernel: k_neighbors must be >= 1"); }
  if (options.k_neighbors > nfov) {
    throw ParameterError("build_st_kernel: k_neighbors (" + std::to_string(options.k_neighbors) +
                         ") exceeds the field-of-view pixel count (" + std::to_string(nfov) + ")");
  }
  auto temporal = TemporalKernel::gaussian(n_frames, options.window);
  auto const C = composite.dim(0);
  auto const k = options.k_neighbors;

  // standardised features, feature-major per pixel
  std::vector<double> feat(npix * C, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    auto const img = composite.slab(c);
    double mean = 0, var = 0;
    for (std::size_t j = 0; j < npix; ++j) {
      if (mask[j]) { mean += img[j]; }
    }
    mean /= static_cast<double>(nfov);
    for (std::size_t j = 0; j < npix; ++j) {
      if (mask[j]) { var += (img[j] - mean) * (img[j] - mean); }
    }
    double const sd = std::sqrt(var / static_cast<double>(nfov));
    for (std::size_t j = 0; j < npix; ++j) {
      if (mask[j]) { feat[j * C + c] = sd > 0 ? (img[j] - mean) / sd : 0.0; }
    }
  }

  struct Candidate
  {
    double dist2;
    std::uint32_t pixel;
  };
  // neighbours[j] holds self first, then the k-1 nearest others
  std::vector<std::vector<Candidate>> neighbours(npix);
  parallel_for(n, [&](std::size_t row) {
    std::vector<Candidate> cand;
    for (std::size_t colx = 0; colx < n; ++colx) {
      std::size_t const j = row * n + colx;
      if (!mask[j]) { continue; }
      auto const r0 = static_cast<long>(row), c0 = static_cast<long>(colx);
      for (long radius = static_cast<long>(options.search_radius);; ++radius) {
        cand.clear();
        for (long r = std::max(0L, r0 - radius); r <= std::min<long>(static_cast<long>(n) - 1, r0 + radius); ++r) {
          for (long c = std::max(0L, c0 - radius); c <= std::min<long>(static_cast<long>(n) - 1, c0 + radius); ++c) {
            auto const l = static_cast<std::size_t>(r) * n + static_cast<std::size_t>(c);
            if (l == j || !mask[l]) { continue; }
            double d2 = 0;
            for (std::size_t f = 0; f < C; ++f) {
              double const d = feat[j * C + f] - feat[l * C + f];
              d2 += d * d;
            }
            cand.push_back({d2, static_cast<std::uint32_t>(l)});
          }
        }
        if (cand.size() + 1 >= k || radius >= static_cast<long>(n)) { break; }
      }
      auto const take = std::min(cand.size(), k - 1);
      std::partial_sort(cand.begin(), cand.begin() + static_cast<long>(take), cand.end(),
                        [](Candidate const &a, Candidate const &b) {
                          return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.pixel < b.pixel);
                        });
      auto &nb = neighbours[j];
      nb.push_back({0.0, static_cast<std::uint32_t>(j)});
      nb.insert(nb.end(), cand.begin(), cand.begin() + static_cast<long>(take));
    }
  });

  auto mean_distance = [](std::vector<Candidate> const &nb) {
    if (nb.size() < 2) { return 0.0; }
    double s = 0;
    for (std::size_t i = 1; i < nb.size(); ++i) { s += std::sqrt(nb[i].dist2); }
    return s / static_cast<double>(nb.size() - 1);
  };
  double global_sigma = 0;
  if (options.sigma_mode == SigmaMode::GlobalMean) {
    double acc = 0;
    std::size_t cnt = 0;
    for (auto const &nb : neighbours) {
      for (std::size_t i = 1; i < nb.size(); ++i) {
        acc += std::sqrt(nb[i].dist2);
        ++cnt;
      }
    }
    global_sigma = cnt ? acc / static_cast<double>(cnt) : 0.0;
  }

  SpatialKernel spatial;
  spatial.n_pixels = npix;
  spatial.row_ptr.push_back(0);
  for (std::size_t j = 0; j < npix; ++j) {
    auto const &nb = neighbours[j];
    if (nb.empty()) {
      spatial.col.push_back(static_cast<std::uint32_t>(j));
      spatial.weight.push_back(1.0);
    } else {
      double const sigma = options.sigma_mode == SigmaMode::LocalMean ? mean_distance(nb) : global_sigma;
      std::vector<double> w(nb.size());
      for (std::size_t i = 0; i < nb.size(); ++i) {
        w[i] = sigma > 0 ? std::exp(-nb[i].dist2 / (2.0 * sigma * sigma)) : 1.0;
      }
      double const sum = std::accumulate(w.begin(), w.end(), 0.0);
      for (std::size_t i = 0; i < nb.size(); ++i) {
        spatial.col.push_back(nb[i].pixel);
        spatial.weight.push_back(w[i] / sum);
      }
    }
    spatial.row_ptr.push_back(spatial.col.size());
  }
  return {std::move(spatial), std::move(temporal)};
}

template <typename Real>
TensorD composite_images(Tensor<Real> const &y,
                         Tensor<Real> const &background,
                         FrameSchedule const &sched,
                         Projector const &projector,
                         std::size_t n_groups,
                         std::size_t n_iter)
{
  auto const &g = projector.geometry();
  detail::check_series(y, background, g, "composite_images");
  auto const T = y.dim(0);
  if (sched.size() != T) { throw ParameterError("composite_images: schedule length does not match the series"); }
  if (n_groups < 1) { throw ParameterError("composite_images: n_groups must be >= 1"); }

  double const t0 = sched[0].start_s;
  double const span = sched.total_duration() / static_cast<double>(n_groups);
  std::vector<std::vector<std::size_t>> groups(n_groups);
  for (std::size_t t = 0; t < T; ++t) {
    auto gi = static_cast<std::size_t>((sched[t].mid_s() - t0) / span);
    groups[std::min(gi, n_groups - 1)].push_back(t);
  }
  std::erase_if(groups, [](auto const &v) { return v.empty(); });

  auto const G = groups.size();
  TensorD ysum({G, g.n_views(), g.n_bins()});
  TensorD rsum = background.empty() ? TensorD{} : TensorD({G, g.n_views(), g.n_bins()});
  for (std::size_t gi = 0; gi < G; ++gi) {
    auto dst = ysum.slab(gi);
    for (auto t : groups[gi]) {
      auto const src = y.slab(t);
      for (std::size_t i = 0; i < dst.size(); ++i) { dst[i] += src[i]; }
      if (!background.empty()) {
        auto rd = rsum.slab(gi);
        auto const rs = background.slab(t);
        for (std::size_t i = 0; i < rd.size(); ++i) { rd[i] += rs[i]; }
      }
    }
  }
  return mlem<double>(ysum, projector, rsum, n_iter, fov_ones<double>(g, G));
}

template <typename Real>
Tensor<Real> kem_st(Tensor<Real> const &y,
                    Projector const &projector,
                    KernelOperator const &kernel,
                    std::size_t n_iter,
                    Tensor<Real> const &background,
                    std::function<void(std::size_t, Tensor<Real> const &)> const &observer)
{
  auto const &g = projector.geometry();
  detail::check_series(y, background, g, "kem_st");
  if (n_iter < 1) { throw ParameterError("kem_st: n_iter must be >= 1"); }
  auto const T = y.dim(0);
  if (kernel.temporal.n_frames != T || kernel.spatial.n_pixels != g.n_pixels()) {
    throw ParameterError("kem_st: kernel does not match the data (" + std::to_string(kernel.temporal.n_frames) +
                         " frames, " + std::to_string(kernel.spatial.n_pixels) + " pixels)");
  }

  Tensor<Real> sens({T, g.image_size(), g.image_size()});
  for (std::size_t t = 0; t < T; ++t) {
    auto f = sens.slab(t);
    for (std::size_t j = 0; j < f.size(); ++j) { f[j] = static_cast<Real>(projector.sensitivity()[j]); }
  }
  Tensor<Real> const sens_k = kernel.apply_transpose(sens);
  Tensor<Real> alpha = fov_ones<Real>(g, T);

  Tensor<Real> ratio({T, g.n_views(), g.n_bins()});
  for (std::size_t it = 0; it < n_iter; ++it) {
    Tensor<Real> const x = kernel.apply(alpha);
    parallel_for(T, [&](std::size_t t) {
      auto rt = ratio.slab(t);
      projector.forward<Real>(x.slab(t), rt);
      detail::data_ratio<Real>(y.slab(t), background.empty() ? std::span<Real const>{} : background.slab(t), rt);
    });
    Tensor<Real> const bp = kernel.apply_transpose(back_project(projector, ratio));
    auto a = alpha.data();
    auto const sk = sens_k.data();
    auto const b = bp.data();
    for (std::size_t i = 0; i < a.size(); ++i) { a[i] = sk[i] > Real(0) ? a[i] / sk[i] * b[i] : Real(0); }
    if (observer) { observer(it + 1, kernel.apply(alpha)); }
  }
  return kernel.apply(alpha);
}

template void SpatialKernel::apply(std::span<float const>, std::span<float>) const;
template void SpatialKernel::apply(std::span<double const>, std::span<double>) const;
template void SpatialKernel::apply_transpose(std::span<float const>, std::span<float>) const;
template void SpatialKernel::apply_transpose(std::span<double const>, std::span<double>) const;
template Tensor<float> KernelOperator::apply(Tensor<float> const &) const;
template Tensor<double> KernelOperator::apply(Tensor<double> const &) const;
template Tensor<float> KernelOperator::apply_transpose(Tensor<float> const &) const;
template Tensor<double> KernelOperator::apply_transpose(Tensor<double> const &) const;
template TensorD composite_images(Tensor<float> const &, Tensor<float> const &, FrameSchedule const &,
                                  Projector const &, std::size_t, std::size_t);
template TensorD composite_images(Tensor<double> const &, Tensor<double> const &, FrameSchedule const &,
                                  Projector const &, std::size_t, std::size_t);
template Tensor<float> kem_st(Tensor<float> const &, Projector const &, KernelOperator const &, std::size_t,
                              Tensor<float> const &, std::function<void(std::size_t, Tensor<float> const &)> const &);
template Tensor<double> kem_st(Tensor<double> const &, Projector const &, KernelOperator const &, std::size_t,
                               Tensor<double> const &,
                               std::function<void(std::size_t, Tensor<double> const &)> const &);

} // namespace stpd
