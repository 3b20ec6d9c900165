#include "em_detail.hpp"
#include "stpd/parallel.hpp"
#include "stpd/recon.hpp"

#include <cmath>
#include <limits>

namespace stpd {

template <typename Real>
double poisson_log_likelihood(std::span<Real const> y, std::span<Real const> ybar)
{
  if (y.size() != ybar.size()) { throw ParameterError("poisson_log_likelihood: size mismatch"); }
  double ll = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double const m = ybar[i], c = y[i];
    if (m > 0) {
      ll += c * std::log(m) - m;
    } else if (c > 0) {
      return -std::numeric_limits<double>::infinity();
    }
  }
  return ll;
}

template <typename Real>
Tensor<Real> fov_ones(ProjectorGeometry const &g, std::size_t n_frames)
{
  Tensor<Real> x({n_frames, g.image_size(), g.image_size()});
  for (std::size_t t = 0; t < n_frames; ++t) {
    auto f = x.slab(t);
    for (std::size_t j = 0; j < f.size(); ++j) { f[j] = g.fov_mask()[j] ? Real(1) : Real(0); }
  }
  return x;
}

template <typename Real>
Tensor<Real> mlem(Tensor<Real> const &y,
                  Projector const &projector,
                  Tensor<Real> const &background,
                  std::size_t n_iter,
                  Tensor<Real> const &x0,
                  FrameObserver<Real> const &observer)
{
  auto const &g = projector.geometry();
  detail::check_series(y, background, g, "mlem");
  auto const T = y.dim(0);
  if (n_iter < 1) { throw ParameterError("mlem: n_iter must be >= 1"); }
  if (x0.shape() != Shape{T, g.image_size(), g.image_size()}) {
    throw ParameterError("mlem: x0 must be " + shape_string({T, g.image_size(), g.image_size()}) + ", got " +
                         shape_string(x0.shape()));
  }
  auto const &mask = g.fov_mask();
  for (std::size_t t = 0; t < T; ++t) {
    auto const f = x0.slab(t);
    for (std::size_t j = 0; j < f.size(); ++j) {
      if (mask[j] && !(f[j] > 0)) {
        throw ParameterError("mlem: x0 must be > 0 inside the field of view (frame " + std::to_string(t) + ")");
      }
    }
  }

  std::vector<Real> sens(projector.sensitivity().begin(), projector.sensitivity().end());
  Tensor<Real> x = x0;

  parallel_for(T, [&](std::size_t t) {
    auto xt = x.slab(t);
    auto const yt = y.slab(t);
    auto const rt = background.empty() ? std::span<Real const>{} : background.slab(t);
    std::vector<Real> fp(g.n_rays()), bp(g.n_pixels());
    for (std::size_t j = 0; j < xt.size(); ++j) {
      if (!mask[j]) { xt[j] = Real(0); }
    }
    for (std::size_t it = 0; it < n_iter; ++it) {
      projector.forward<Real>(xt, fp);
      detail::data_ratio<Real>(yt, rt, fp);
      projector.adjoint<Real>(fp, bp);
      for (std::size_t j = 0; j < xt.size(); ++j) { xt[j] = sens[j] > Real(0) ? xt[j] / sens[j] * bp[j] : Real(0); }
      if (observer) { observer(t, it + 1, xt); }
    }
  });
  return x;
}

template double poisson_log_likelihood(std::span<float const>, std::span<float const>);
template double poisson_log_likelihood(std::span<double const>, std::span<double const>);
template Tensor<float> fov_ones(ProjectorGeometry const &, std::size_t);
template Tensor<double> fov_ones(ProjectorGeometry const &, std::size_t);
template Tensor<float> mlem(Tensor<float> const &, Projector const &, Tensor<float> const &, std::size_t,
                            Tensor<float> const &, FrameObserver<float> const &);
template Tensor<double> mlem(Tensor<double> const &, Projector const &, Tensor<double> const &, std::size_t,
                             Tensor<double> const &, FrameObserver<double> const &);

} // namespace stpd
