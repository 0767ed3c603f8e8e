#include "solstab/fit.hpp"

#include "solstab/error.hpp"

#include <algorithm>
#include <vector>

namespace solstab::fit {

Line least_squares(std::span<const double> x, std::span<const double> y) {
    const std::size_t m = x.size();
    if (m < 2 || y.size() != m) throw Error(ErrorKind::Precondition, "least squares needs two or more points");
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < m; ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / m, my = sy / m;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < m; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    Line l;
    l.slope = sxx > 0 ? sxy / sxx : 0.0;
    l.intercept = my - l.slope * mx;
    return l;
}

Line median_slope(std::span<const double> x, std::span<const double> y) {
    const std::size_t m = x.size();
    if (m < 3 || y.size() != m) throw Error(ErrorKind::Precondition, "median-of-slopes fit needs three or more points");
    const std::size_t half = m / 2;
    std::vector<double> s;
    s.reserve(m - half);
    for (std::size_t j = 0; j + half < m; ++j) s.push_back((y[j + half] - y[j]) / (x[j + half] - x[j]));
    std::nth_element(s.begin(), s.begin() + s.size() / 2, s.end());
    Line l;
    l.slope = s[s.size() / 2];
    std::vector<double> c(m);
    for (std::size_t j = 0; j < m; ++j) c[j] = y[j] - l.slope * x[j];
    std::nth_element(c.begin(), c.begin() + m / 2, c.end());
    l.intercept = c[m / 2];
    return l;
}

} // namespace solstab::fit
