#include "wdsm/density_grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "wdsm/errors.hpp"

namespace wdsm::density {
namespace {

void check_pd(double pd) {
  if (!(pd >= 0.0 && pd <= 1.0)) {
    throw DomainError("percent density must lie in [0,1], got " + std::to_string(pd));
  }
}

void check_class12(int c) {
  if (c < 0 || c >= kGridClasses) {
    throw DomainError("12-class label must lie in 0..11, got " + std::to_string(c));
  }
}

}  // namespace

int pd_to_class12(double pd) {
  check_pd(pd);
  // pd * 12 can round across an edge; settle against the edges themselves.
  int c = std::min(static_cast<int>(std::floor(pd * kGridClasses)), kGridClasses - 1);
  if (c > 0 && pd < static_cast<double>(c) / kGridClasses) --c;
  if (c + 1 < kGridClasses && pd >= static_cast<double>(c + 1) / kGridClasses) ++c;
  return c;
}

double class12_to_pd(int class12) {
  check_class12(class12);
  return (class12 + 0.5) / kGridClasses;
}

int pd_to_class4(double pd) {
  check_pd(pd);
  if (pd < 0.25) return 0;
  if (pd < 0.50) return 1;
  if (pd < 0.75) return 2;
  return 3;
}

int class12_to_class4(int class12) {
  check_class12(class12);
  return class12 / 3;
}

}  // namespace wdsm::density
