#pragma once

// Shared profiles for the test binaries; built once per process.

#include "solstab/geometry.hpp"
#include "solstab/solitons.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

namespace fx {

using solstab::geometry::WarpedGrid;
using solstab::geometry::WarpedMetric;
using solstab::solitons::Kind;
using solstab::solitons::SolitonProfile;

inline const SolitonProfile& closed(Kind k, int n, double r_max, std::size_t N, bool normalized = false) {
    static std::map<std::tuple<int, int, double, std::size_t, bool>, SolitonProfile> cache;
    static std::mutex mu;
    std::lock_guard lock(mu);
    const auto key = std::make_tuple(static_cast<int>(k), n, r_max, N, normalized);
    auto it = cache.find(key);
    if (it == cache.end()) {
        auto p = solstab::solitons::closed_form(k, n, WarpedGrid::uniform(n, 0.0, r_max, N));
        if (normalized) p = solstab::solitons::normalize_steady(p);
        it = cache.emplace(key, std::move(p)).first;
    }
    return it->second;
}

inline const SolitonProfile& shot(int eps, int n, double s, double r_max, std::size_t N) {
    static std::map<std::tuple<int, int, double, double, std::size_t>, SolitonProfile> cache;
    static std::mutex mu;
    std::lock_guard lock(mu);
    const auto key = std::make_tuple(eps, n, s, r_max, N);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, solstab::solitons::shoot_soliton(eps, n, s, r_max, 1e-9, N)).first;
    return it->second;
}

inline const SolitonProfile& gaussian(int n = 3, double r_max = 12.0, std::size_t N = 2000) {
    return closed(Kind::GaussianExpander, n, r_max, N);
}
inline const SolitonProfile& cigar(double r_max = 15.0, std::size_t N = 2000, bool normalized = true) {
    return closed(Kind::Cigar, 2, r_max, N, normalized);
}
inline const SolitonProfile& bryant_expander(std::size_t N = 2000, double r_max = 15.0) { return shot(1, 3, 0.7, r_max, N); }
inline const SolitonProfile& bryant_steady(std::size_t N = 2000, double r_max = 40.0) { return shot(0, 3, 1.0, r_max, N); }

inline WarpedMetric metric_from(int n, double r0, double r1, std::size_t N, double (*xi)(double), double (*phi)(double)) {
    auto g = WarpedGrid::uniform(n, r0, r1, N);
    std::vector<double> x(N), p(N);
    for (std::size_t i = 0; i < N; ++i) {
        x[i] = xi(g[i]);
        p[i] = phi(g[i]);
    }
    return WarpedMetric(g, x, p);
}

// Observed order from two errors at spacings h and h/2.
inline double order(double coarse, double fine) { return std::log2(coarse / fine); }

} // namespace fx
