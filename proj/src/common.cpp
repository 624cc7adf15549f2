#include "decomp/common.hpp"

namespace decomp {

double bump_template(double t) {
  if (t <= 0.6) return 1.0;
  if (t >= 1.0) return 0.0;
  const double u = (t - 0.6) / 0.4;
  return 1.0 - u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
}

double bump_template_d1(double t) {
  if (t <= 0.6 || t >= 1.0) return 0.0;
  const double u = (t - 0.6) / 0.4;
  return -u * u * (30.0 + u * (-60.0 + 30.0 * u)) / 0.4;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL + (b << 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace decomp
