#pragma once

#include "stpd/projector.hpp"
#include "stpd/tensor.hpp"

#include <span>
#include <string>

namespace stpd::detail {

template <typename Real>
void check_series(Tensor<Real> const &y, Tensor<Real> const &background, ProjectorGeometry const &g, char const *what)
{
  if (y.rank() != 3 || y.dim(1) != g.n_views() || y.dim(2) != g.n_bins()) {
    throw ParameterError(std::string(what) + ": sinogram series must be T x " + std::to_string(g.n_views()) + " x " +
                         std::to_string(g.n_bins()) + ", got " + shape_string(y.shape()));
  }
  if (!background.empty() && background.shape() != y.shape()) {
    throw ParameterError(std::string(what) + ": background shape " + shape_string(background.shape()) +
                         " does not match sinogram " + shape_string(y.shape()));
  }
  for (Real v : y.data()) {
    if (!(v >= 0)) { throw ParameterError(std::string(what) + ": sinogram values must be >= 0"); }
  }
}

// ratio_i = y_i / (fp_i + r_i), 0 where the model is zero. Overwrites fp.
template <typename Real>
void data_ratio(std::span<Real const> y, std::span<Real const> r, std::span<Real> fp)
{
  for (std::size_t i = 0; i < fp.size(); ++i) {
    Real const m = r.empty() ? fp[i] : fp[i] + r[i];
    fp[i] = m > Real(0) ? y[i] / m : Real(0);
  }
}

} // namespace stpd::detail
