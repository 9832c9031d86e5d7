#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <span>
#include <vector>

namespace kmf::parallel {

/// Sets the OpenMP thread count; 0 keeps the runtime default.
void set_threads(int n);
int max_threads();

/// Splits [0, n_rows) into fixed chunks of `chunk` rows, evaluates
/// fn(begin, end, partial_grad) -> partial_loss for each chunk in parallel, then
/// sums partials in chunk order. The result is bit-identical for any thread count.
template <class ChunkFn>
double reduce_chunks(std::size_t n_rows, std::size_t chunk, std::span<double> grad, ChunkFn&& fn) {
    const std::size_t n_params = grad.size();
    const std::size_t n_chunks = (n_rows + chunk - 1) / chunk;
    thread_local std::vector<double> partial;
    partial.assign(n_chunks * n_params, 0.0);
    // workers must not name the thread_local themselves
    double* const scratch = partial.data();
    std::vector<double> losses(n_chunks, 0.0);
    std::exception_ptr failure;

#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(n_chunks); ++c) {
        const auto uc = static_cast<std::size_t>(c);
        const std::size_t begin = uc * chunk;
        const std::size_t end = std::min(n_rows, begin + chunk);
        try {
            losses[uc] = fn(begin, end, std::span<double>(scratch + uc * n_params, n_params));
        } catch (...) {
#pragma omp critical(kmf_reduce_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);

    std::fill(grad.begin(), grad.end(), 0.0);
    double total = 0.0;
    for (std::size_t c = 0; c < n_chunks; ++c) {
        total += losses[c];
        const double* p = partial.data() + c * n_params;
        for (std::size_t k = 0; k < n_params; ++k) grad[k] += p[k];
    }
    return total;
}

}  // namespace kmf::parallel
