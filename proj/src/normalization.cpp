#include "kmf/normalization.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "kmf/error.hpp"

namespace kmf {

NormStats NormStats::fit(const RowMatrix& rows) {
    if (rows.rows() == 0) throw config_error("cannot fit normalization statistics on zero rows");
    NormStats stats;
    const auto n = static_cast<std::size_t>(rows.cols());
    stats.min.resize(n);
    stats.max.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        const auto col = rows.col(static_cast<Eigen::Index>(j));
        stats.min[j] = col.minCoeff();
        stats.max[j] = col.maxCoeff();
    }
    return stats;
}

NormStats NormStats::identity(std::size_t n) {
    return NormStats{std::vector<double>(n, 0.0), std::vector<double>(n, 1.0)};
}

double NormStats::apply(std::size_t j, double v) const noexcept {
    const double range = max[j] - min[j];
    if (range == 0.0) return 0.5;
    return (v - min[j]) / range;
}

double NormStats::invert(std::size_t j, double v) const noexcept {
    const double range = max[j] - min[j];
    if (range == 0.0) return min[j];
    return min[j] + v * range;
}

void NormStats::apply(std::span<const double> in, std::span<double> out) const {
    if (in.size() != size() || out.size() != size()) {
        throw dimension_error(fmt::format("normalization expects {} features, got {}", size(), in.size()));
    }
    for (std::size_t j = 0; j < in.size(); ++j) out[j] = apply(j, in[j]);
}

void NormStats::invert(std::span<const double> in, std::span<double> out) const {
    if (in.size() != size() || out.size() != size()) {
        throw dimension_error(fmt::format("normalization expects {} features, got {}", size(), in.size()));
    }
    for (std::size_t j = 0; j < in.size(); ++j) out[j] = invert(j, in[j]);
}

RowMatrix NormStats::apply(const RowMatrix& rows) const {
    RowMatrix out(rows.rows(), rows.cols());
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        apply(std::span<const double>(rows.row(i).data(), static_cast<std::size_t>(rows.cols())),
              std::span<double>(out.row(i).data(), static_cast<std::size_t>(out.cols())));
    }
    return out;
}

RowMatrix NormStats::invert(const RowMatrix& rows) const {
    RowMatrix out(rows.rows(), rows.cols());
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        invert(std::span<const double>(rows.row(i).data(), static_cast<std::size_t>(rows.cols())),
               std::span<double>(out.row(i).data(), static_cast<std::size_t>(out.cols())));
    }
    return out;
}

}  // namespace kmf
