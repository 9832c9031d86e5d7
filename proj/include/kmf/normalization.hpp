#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kmf/types.hpp"

namespace kmf {

/// Per-feature min-max statistics, fitted on training rows only.
/// Constant features (max == min) normalize to 0.5 and invert to min.
struct NormStats {
    std::vector<double> min;
    std::vector<double> max;

    static NormStats fit(const RowMatrix& rows);
    /// min = 0, max = 1 for every feature: apply() is the identity.
    static NormStats identity(std::size_t n);

    std::size_t size() const noexcept { return min.size(); }

    double apply(std::size_t j, double v) const noexcept;
    double invert(std::size_t j, double v) const noexcept;

    void apply(std::span<const double> in, std::span<double> out) const;
    void invert(std::span<const double> in, std::span<double> out) const;
    RowMatrix apply(const RowMatrix& rows) const;
    RowMatrix invert(const RowMatrix& rows) const;
};

}  // namespace kmf
