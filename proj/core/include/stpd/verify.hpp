#pragma once

#include "stpd/autodiff.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace stpd {

enum class GradCheckScale
{
  Tiny,  ///< 8 x 8 image, 4 views, 8 bins, T = 3, K = 2, hidden 4
  Small, ///< 16 x 16 image, 8 views, 16 bins, T = 4, K = 2, hidden 6
};

struct GradCheckCase
{
  std::string name;
  ad::GradCheckReport report;
};

/// Finite-difference checks of every primitive and of full two-block networks
/// (both temporal extents) with all weights randomised, in double precision.
std::vector<GradCheckCase> gradcheck_suite(GradCheckScale scale, std::uint64_t seed = 0);

} // namespace stpd
