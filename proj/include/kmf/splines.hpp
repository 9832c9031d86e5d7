#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace kmf::splines {

/// Cardinal quadratic B-spline centred at zero, support [-3/2, 3/2], unit integral.
/// At |d| == 1/2 the inner branch is used; at |d| == 3/2 the result is exactly 0.
double quadratic_kernel(double d) noexcept;

/// Derivative of quadratic_kernel with respect to d.
double quadratic_kernel_deriv(double d) noexcept;

/// Clamped B-spline basis on [0, 1]: the first and last knots are repeated degree+1 times.
class ClampedBasis {
public:
    /// Uniform interior knots; needs n >= degree + 1.
    static ClampedBasis uniform(int degree, std::size_t n);

    /// Arbitrary clamped knot vector; validates monotonicity and end multiplicity.
    ClampedBasis(int degree, std::vector<double> knots);

    int degree() const noexcept { return degree_; }
    std::size_t size() const noexcept { return knots_.size() - static_cast<std::size_t>(degree_) - 1; }
    const std::vector<double>& knots() const noexcept { return knots_; }

    /// Knot span index i with knots[i] <= zeta < knots[i+1]; zeta == 1 maps to the last non-empty span.
    std::size_t find_span(double zeta) const;

    /// The degree+1 non-zero basis values at zeta; returns the index of the first of them.
    /// Throws a domain error for zeta outside [0, 1].
    std::size_t eval_nonzero(double zeta, std::span<double> out) const;

    /// All n basis values at zeta (Cox-de Boor triangle).
    std::vector<double> eval(double zeta) const;

private:
    int degree_;
    std::vector<double> knots_;
};

}  // namespace kmf::splines
