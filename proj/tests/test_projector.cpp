#include "oracles.hpp"

#include <stpd/projector.hpp>

#include <gtest/gtest.h>

#include <numbers>

using namespace stpd;

TEST(Geometry, PixelAndBinPositions)
{
  ProjectorGeometry const g(6, 5, 4, 2.0, 0.5);
  EXPECT_DOUBLE_EQ(g.pixel_x(0), -3.0);
  EXPECT_DOUBLE_EQ(g.pixel_y(3), 3.0);
  EXPECT_DOUBLE_EQ(g.bin_position(0), -1.0);
  EXPECT_DOUBLE_EQ(g.bin_position(2), 0.0);
  EXPECT_DOUBLE_EQ(g.angles()[3], std::numbers::pi / 2);
  EXPECT_EQ(g.cos_angle(3), 0.0);
  EXPECT_EQ(g.sin_angle(0), 0.0);
  EXPECT_DOUBLE_EQ(g.fov_radius(), 4.0);
  EXPECT_THROW(ProjectorGeometry(0, 4, 4), ParameterError);
  EXPECT_THROW(ProjectorGeometry(4, 4, 4, -1.0), ParameterError);
}

TEST(Geometry, FovMaskIsTheInscribedDisc)
{
  ProjectorGeometry const g(4, 8, 8);
  std::size_t inside = 0;
  for (std::size_t r = 0; r < 8; ++r) {
    for (std::size_t c = 0; c < 8; ++c) {
      bool const expect = std::hypot(g.pixel_x(c), g.pixel_y(r)) <= 4.0;
      EXPECT_EQ(g.in_fov(r, c), expect);
      inside += expect;
    }
  }
  EXPECT_EQ(g.fov_pixel_count(), inside);
  EXPECT_FALSE(g.in_fov(0, 0));
}

TEST(LineBoxLength, MatchesClosedFormCases)
{
  // horizontal chord through a unit square
  EXPECT_DOUBLE_EQ(line_box_length(0, 1, 0.25, 0, 1, 0, 1), 1.0);
  // diagonal through the centre of the unit square: sqrt(2)
  double const c = std::cos(std::numbers::pi / 4), s = std::sin(std::numbers::pi / 4);
  EXPECT_NEAR(line_box_length(c, s, c, 0, 1, 0, 1), std::sqrt(2.0), 1e-12);
  // misses
  EXPECT_EQ(line_box_length(1, 0, 2.0, 0, 1, 0, 1), 0.0);
  // against the independent clip at random lines
  std::mt19937 gen(5);
  std::uniform_real_distribution<double> u(-1.5, 1.5), ang(0, std::numbers::pi);
  for (int i = 0; i < 500; ++i) {
    double const th = ang(gen), off = u(gen);
    double const x0 = u(gen), y0 = u(gen);
    EXPECT_NEAR(line_box_length(std::cos(th), std::sin(th), off, x0, x0 + 0.7, y0, y0 + 0.7),
                oracle::clip_length(std::cos(th), std::sin(th), off, x0, x0 + 0.7, y0, y0 + 0.7), 1e-12);
  }
}

TEST(Projector, MatchesIndependentDenseMatrix)
{
  // even image and bin counts: no ray runs along a pixel edge
  ProjectorGeometry const g(7, 12, 8, 1.0, 0.9);
  Projector const p(g);
  auto const a = oracle::system_matrix(g);
  auto const x = oracle::random_tensor({8, 8}, 3, 0, 1);
  auto const y = oracle::random_tensor({7, 12}, 4, 0, 1);

  std::vector<double> gx(g.n_rays()), gty(g.n_pixels());
  p.forward<double>(x.data(), gx);
  p.adjoint<double>(y.data(), gty);
  auto const ref_gx = oracle::matvec(a, x.data(), g.n_rays());
  auto const ref_gty = oracle::matvec_t(a, y.data(), g.n_pixels());
  for (std::size_t i = 0; i < gx.size(); ++i) { EXPECT_NEAR(gx[i], ref_gx[i], 1e-12) << "ray " << i; }
  for (std::size_t j = 0; j < gty.size(); ++j) { EXPECT_NEAR(gty[j], ref_gty[j], 1e-12) << "pixel " << j; }

  // the library's own dense builder agrees as well
  auto const dense = dense_matrix(g);
  auto const dx = dense.apply(x.data(), g.n_rays());
  for (std::size_t i = 0; i < gx.size(); ++i) { EXPECT_NEAR(dx[i], ref_gx[i], 1e-12); }
}

TEST(Projector, AxisViewsAreColumnAndRowSums)
{
  // bins at pixel centres: view 0 integrates columns, view V/2 rows, length 1
  // per pixel inside the field of view
  std::size_t const N = 10;
  ProjectorGeometry const g(4, N, N);
  Projector const p(g);
  auto const x = oracle::random_tensor({N, N}, 9, 0, 1);
  std::vector<double> sino(g.n_rays());
  p.forward<double>(x.data(), sino);
  for (std::size_t b = 0; b < N; ++b) {
    double col = 0, row = 0;
    for (std::size_t k = 0; k < N; ++k) {
      if (g.in_fov(k, b)) { col += x[k * N + b]; }
      if (g.in_fov(b, k)) { row += x[b * N + k]; }
    }
    EXPECT_NEAR(sino[0 * N + b], col, 1e-12);
    EXPECT_NEAR(sino[2 * N + b], row, 1e-12);
  }
}

TEST(Projector, AdjointIdentity)
{
  ProjectorGeometry const g(32, 32, 32);
  Projector const p(g);
  for (std::uint32_t k = 0; k < 20; ++k) {
    auto const x = oracle::random_tensor({32, 32}, 100 + k);
    auto const y = oracle::random_tensor({32, 32}, 200 + k);
    std::vector<double> gx(g.n_rays()), gty(g.n_pixels());
    p.forward<double>(x.data(), gx);
    p.adjoint<double>(y.data(), gty);
    double const lhs = oracle::dot(gx, y.data()), rhs = oracle::dot(x.data(), gty);
    EXPECT_LT(std::abs(lhs - rhs) / std::max(std::abs(lhs), std::abs(rhs)), 1e-10);
  }
}

TEST(Projector, MaskedPixelsAreInvisible)
{
  ProjectorGeometry const g(16, 16, 16);
  Projector const p(g);
  TensorD x({16, 16});
  x[0] = 1.0; // corner, outside the disc
  std::vector<double> sino(g.n_rays());
  p.forward<double>(x.data(), sino);
  for (double v : sino) { EXPECT_EQ(v, 0.0); }
  for (std::size_t j = 0; j < g.n_pixels(); ++j) {
    if (!g.fov_mask()[j]) {
      EXPECT_EQ(p.sensitivity()[j], 0.0);
    } else {
      EXPECT_GT(p.sensitivity()[j], 0.0);
    }
  }
}

TEST(Projector, SinglePrecisionTracksDouble)
{
  ProjectorGeometry const g(20, 24, 16);
  Projector const p(g);
  auto const x = oracle::random_tensor({3, 16, 16}, 2, 0, 1);
  auto const yd = forward_project(p, x);
  auto const yf = forward_project(p, x.cast<float>());
  ASSERT_EQ(yd.shape(), (Shape{3, 20, 24}));
  for (std::size_t i = 0; i < yd.size(); ++i) { EXPECT_NEAR(yf[i], yd[i], 1e-5 * (1 + std::abs(yd[i]))); }
  auto const bd = back_project(p, yd);
  EXPECT_EQ(bd.shape(), (Shape{3, 16, 16}));
  EXPECT_THROW(forward_project(p, TensorD({3, 15, 15})), ParameterError);
}

TEST(Projector, TotalLengthPerViewIsTheDiscArea)
{
  // with bins covering the disc, sum_b G 1 * spacing approximates the area of
  // the masked pixels (each ray contributes its chord; bins tile the width)
  ProjectorGeometry const g(9, 200, 16, 1.0, 0.1);
  Projector const p(g);
  TensorD ones({16, 16}, 1.0);
  std::vector<double> sino(g.n_rays());
  p.forward<double>(ones.data(), sino);
  double const area = static_cast<double>(g.fov_pixel_count());
  for (std::size_t v = 0; v < g.n_views(); ++v) {
    double s = 0;
    for (std::size_t b = 0; b < g.n_bins(); ++b) { s += sino[v * g.n_bins() + b]; }
    EXPECT_NEAR(s * 0.1, area, 0.02 * area) << "view " << v;
  }
}
