#pragma once

// Conversions between percent density (a fraction in [0,1]), the 12-class
// density grid, and the 4-class BI-RADS scale. The grid has 12 equal-width
// bins [i/12, (i+1)/12); every boundary is left-closed and the last bin also
// contains 1. Three grid bins nest inside each BI-RADS quartile.
namespace wdsm::density {

inline constexpr int kGridClasses = 12;
inline constexpr int kBiradsClasses = 4;

int pd_to_class12(double pd);
// Bin midpoint (c + 0.5) / 12.
double class12_to_pd(int class12);
int pd_to_class4(double pd);
int class12_to_class4(int class12);

}  // namespace wdsm::density
