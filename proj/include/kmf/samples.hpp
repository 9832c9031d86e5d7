#pragma once

#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "kmf/types.hpp"

namespace kmf {

/// Normalized training rows with per-sample loss weights.
struct SampleSet {
    RowMatrix inputs;
    RowMatrix targets;
    std::vector<double> weights;

    std::size_t size() const noexcept { return static_cast<std::size_t>(inputs.rows()); }
    std::size_t input_dim() const noexcept { return static_cast<std::size_t>(inputs.cols()); }
    std::size_t output_dim() const noexcept { return static_cast<std::size_t>(targets.cols()); }

    /// Throws a dimension error when row counts or weight length disagree.
    void validate() const;

    std::span<const double> input(std::size_t row) const {
        return {inputs.row(static_cast<Eigen::Index>(row)).data(), input_dim()};
    }
    std::span<const double> target(std::size_t row) const {
        return {targets.row(static_cast<Eigen::Index>(row)).data(), output_dim()};
    }
};

inline std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
}

/// Sum of weights over the selected rows; throws when it is not positive.
double total_weight(const SampleSet& set, std::span<const std::size_t> rows);

}  // namespace kmf
