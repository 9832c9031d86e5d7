#include "kmf/parallel.hpp"

#include <omp.h>

#include <fmt/format.h>

#include "kmf/error.hpp"
#include "kmf/samples.hpp"

namespace kmf {

namespace parallel {

void set_threads(int n) {
    if (n > 0) omp_set_num_threads(n);
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace parallel

void SampleSet::validate() const {
    if (targets.rows() != inputs.rows()) {
        throw dimension_error(fmt::format("{} input rows but {} target rows", inputs.rows(), targets.rows()));
    }
    if (weights.size() != size()) {
        throw dimension_error(fmt::format("{} rows but {} weights", size(), weights.size()));
    }
}

double total_weight(const SampleSet& set, std::span<const std::size_t> rows) {
    double total = 0.0;
    for (std::size_t r : rows) {
        const double w = set.weights[r];
        if (w < 0.0) throw config_error("sample weights must be nonnegative");
        total += w;
    }
    if (!(total > 0.0)) throw Error(ErrorKind::config, "degenerate_weights", "all sample weights are zero");
    return total;
}

}  // namespace kmf
