#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

namespace vsrl {

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;  // sample standard deviation (n - 1); 0 for fewer than two values
    std::size_t n = 0;
};

inline MeanSd mean_sd(std::span<const double> xs) {
    MeanSd r;
    r.n = xs.size();
    if (xs.empty()) return r;
    double sum = 0.0;
    for (double x : xs) sum += x;
    r.mean = sum / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - r.mean) * (x - r.mean);
        r.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return r;
}

struct TTestResult {
    double t = 0.0;
    double df = 0.0;
    double p_value = 1.0;  // two-sided
};

/// Welch's unequal-variance two-sample t-test.
inline TTestResult welch_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("welch_t_test: need at least two values per sample");
    const auto sa = mean_sd(a);
    const auto sb = mean_sd(b);
    const double va = sa.sd * sa.sd / static_cast<double>(sa.n);
    const double vb = sb.sd * sb.sd / static_cast<double>(sb.n);
    TTestResult r;
    if (va + vb == 0.0) {
        r.t = sa.mean == sb.mean ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), sa.mean - sb.mean);
        r.df = static_cast<double>(sa.n + sb.n - 2);
        r.p_value = sa.mean == sb.mean ? 1.0 : 0.0;
        return r;
    }
    r.t = (sa.mean - sb.mean) / std::sqrt(va + vb);
    r.df = (va + vb) * (va + vb) /
           (va * va / static_cast<double>(sa.n - 1) + vb * vb / static_cast<double>(sb.n - 1));
    const boost::math::students_t dist(r.df);
    r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
    return r;
}

}  // namespace vsrl
