#include "kmf/splines.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "kmf/error.hpp"

namespace kmf::splines {

double quadratic_kernel(double d) noexcept {
    const double a = std::abs(d);
    if (a <= 0.5) return 0.75 - a * a;
    if (a < 1.5) {
        const double t = 1.5 - a;
        return 0.5 * t * t;
    }
    return 0.0;
}

double quadratic_kernel_deriv(double d) noexcept {
    const double a = std::abs(d);
    if (a <= 0.5) return -2.0 * d;
    if (a < 1.5) return d > 0.0 ? -(1.5 - a) : (1.5 - a);
    return 0.0;
}

ClampedBasis ClampedBasis::uniform(int degree, std::size_t n) {
    if (degree < 1) throw config_error("B-spline degree must be >= 1");
    const auto p = static_cast<std::size_t>(degree);
    if (n < p + 1) {
        throw config_error(fmt::format("clamped basis needs at least {} functions for degree {}, got {}",
                                       p + 1, degree, n));
    }
    std::vector<double> knots(n + p + 1);
    const std::size_t segments = n - p;
    for (std::size_t i = 0; i < knots.size(); ++i) {
        if (i <= p) {
            knots[i] = 0.0;
        } else if (i >= n) {
            knots[i] = 1.0;
        } else {
            knots[i] = static_cast<double>(i - p) / static_cast<double>(segments);
        }
    }
    return ClampedBasis(degree, std::move(knots));
}

ClampedBasis::ClampedBasis(int degree, std::vector<double> knots) : degree_(degree), knots_(std::move(knots)) {
    if (degree_ < 1) throw config_error("B-spline degree must be >= 1");
    const auto p = static_cast<std::size_t>(degree_);
    if (knots_.size() < 2 * (p + 1)) throw config_error("knot vector too short for the degree");
    if (!std::is_sorted(knots_.begin(), knots_.end())) throw config_error("knot vector must be nondecreasing");
    for (std::size_t i = 0; i <= p; ++i) {
        if (knots_[i] != 0.0 || knots_[knots_.size() - 1 - i] != 1.0) {
            throw config_error("knot vector must be clamped on [0, 1]");
        }
    }
}

std::size_t ClampedBasis::find_span(double zeta) const {
    if (!(zeta >= 0.0 && zeta <= 1.0)) {
        throw domain_error(fmt::format("B-spline parameter {} outside [0, 1]", zeta));
    }
    const auto p = static_cast<std::size_t>(degree_);
    const std::size_t n = size();
    if (zeta >= knots_[n]) return n - 1;
    // Last index i in [p, n-1] with knots[i] <= zeta.
    auto it = std::upper_bound(knots_.begin() + static_cast<std::ptrdiff_t>(p),
                               knots_.begin() + static_cast<std::ptrdiff_t>(n) + 1, zeta);
    return static_cast<std::size_t>(it - knots_.begin()) - 1;
}

std::size_t ClampedBasis::eval_nonzero(double zeta, std::span<double> out) const {
    const auto p = static_cast<std::size_t>(degree_);
    if (out.size() != p + 1) throw dimension_error("eval_nonzero output must hold degree+1 values");
    const std::size_t span = find_span(zeta);

    // Piegl & Tiller basis triangle.
    std::vector<double> left(p + 1), right(p + 1);
    out[0] = 1.0;
    for (std::size_t j = 1; j <= p; ++j) {
        left[j] = zeta - knots_[span + 1 - j];
        right[j] = knots_[span + j] - zeta;
        double saved = 0.0;
        for (std::size_t r = 0; r < j; ++r) {
            const double temp = out[r] / (right[r + 1] + left[j - r]);
            out[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        out[j] = saved;
    }
    return span - p;
}

std::vector<double> ClampedBasis::eval(double zeta) const {
    const auto p = static_cast<std::size_t>(degree_);
    std::vector<double> local(p + 1);
    const std::size_t first = eval_nonzero(zeta, local);
    std::vector<double> values(size(), 0.0);
    std::copy(local.begin(), local.end(), values.begin() + static_cast<std::ptrdiff_t>(first));
    return values;
}

}  // namespace kmf::splines
