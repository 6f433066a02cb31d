#pragma once

#include <filesystem>

#include "interlace/green.hpp"

namespace interlace::testing {

/// Green tables shared by the tests, cached in the build tree.
inline const GreenTable& table3(int radius = 32) {
  static GreenTable small = load_or_build_green_table(3, 32, 0, std::filesystem::path(INTERLACE_TEST_CACHE));
  static GreenTable large = load_or_build_green_table(3, 96, 0, std::filesystem::path(INTERLACE_TEST_CACHE));
  return radius <= 32 ? small : large;
}

/// Watson's closed form for g(0) on Z^3:
/// sqrt(6) / (32 pi^3) Gamma(1/24) Gamma(5/24) Gamma(7/24) Gamma(11/24).
inline double watson_g0() {
  const double pi = 3.14159265358979323846;
  return std::sqrt(6.0) / (32.0 * pi * pi * pi) * std::tgamma(1.0 / 24) * std::tgamma(5.0 / 24) *
         std::tgamma(7.0 / 24) * std::tgamma(11.0 / 24);
}

}  // namespace interlace::testing
