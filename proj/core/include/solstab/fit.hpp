#pragma once

#include <span>

namespace solstab::fit {

struct Line {
    double slope = 0.0;
    double intercept = 0.0;
};

// Ordinary least squares y ~ slope*x + intercept.
Line least_squares(std::span<const double> x, std::span<const double> y);

// Robust slope: median of the slopes between points j and j + M/2 (M = number of points).
Line median_slope(std::span<const double> x, std::span<const double> y);

} // namespace solstab::fit
