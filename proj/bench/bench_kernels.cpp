// Serial reference vs OpenMP loss_gradient on the LF and delta model sizes.
// Usage: bench_kernels [rows=2000] [repeats=5]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "kmf/khronos.hpp"
#include "kmf/mlp.hpp"
#include "kmf/parallel.hpp"

using namespace kmf;

namespace {

SampleSet make_set(std::size_t n, std::size_t d, std::size_t m) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SampleSet s;
    s.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    s.targets.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    for (Eigen::Index i = 0; i < s.inputs.size(); ++i) s.inputs.data()[i] = u(rng);
    for (Eigen::Index i = 0; i < s.targets.size(); ++i) s.targets.data()[i] = u(rng);
    s.weights.assign(n, 1.0);
    return s;
}

// median wall time of `repeats` calls, in milliseconds
template <class F>
double time_ms(F&& f, int repeats) {
    std::vector<double> t;
    for (int r = 0; r < repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        t.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    std::nth_element(t.begin(), t.begin() + static_cast<long>(t.size() / 2), t.end());
    return t[t.size() / 2];
}

template <class M, class Fast, class Ref>
void run(const std::string& name, const M& model, const SampleSet& set, int repeats, Fast fast, Ref ref) {
    std::vector<std::size_t> rows(set.size());
    std::iota(rows.begin(), rows.end(), 0);
    std::vector<double> g(model.parameter_count()), h(model.parameter_count());
    const double serial = time_ms([&] { ref(model, set, rows, std::span<double>(h)); }, repeats);
    fmt::print("{:<28} {:>10} params  reference {:9.2f} ms\n", name, model.parameter_count(), serial);
    std::vector<int> threads{1};
    for (int t = 2; t <= parallel::max_threads(); t *= 2) threads.push_back(t);
    if (threads.back() != parallel::max_threads()) threads.push_back(parallel::max_threads());
    for (int t : threads) {
        parallel::set_threads(t);
        const double ms = time_ms([&] { fast(model, set, rows, std::span<double>(g)); }, repeats);
        double diff = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k) diff = std::max(diff, std::abs(g[k] - h[k]));
        fmt::print("{:<28} {:>2} threads {:9.2f} ms  speedup {:5.2f}  max |diff| {:.1e}\n", "", t, ms, serial / ms, diff);
    }
    parallel::set_threads(0);
}

}  // namespace

int main(int argc, char** argv) {
    const std::size_t n = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 2000;
    const int repeats = argc > 2 ? std::atoi(argv[2]) : 5;
    fmt::print("rows {}, repeats {}, max threads {}\n", n, repeats, parallel::max_threads());

    const SampleSet lf = make_set(n, 18, 81);
    const SampleSet delta = make_set(n, 99, 81);
    run("khronos lf k3 r4", khronos::KhronosModel::create({18, 3, 4, 81}, 1, {1.0}), lf, repeats,
        [](auto&&... a) { return khronos::loss_gradient(a...); },
        [](auto&&... a) { return khronos::reference::loss_gradient(a...); });
    run("khronos delta k3 r6", khronos::KhronosModel::create({99, 3, 6, 81}, 1, {1.0}), delta, repeats,
        [](auto&&... a) { return khronos::loss_gradient(a...); },
        [](auto&&... a) { return khronos::reference::loss_gradient(a...); });
    run("mlp lf 256x4", mlp::MlpModel::create({18, 256, 256, 256, 256, 81}, 1), lf, repeats,
        [](auto&&... a) { return mlp::loss_gradient(a...); },
        [](auto&&... a) { return mlp::reference::loss_gradient(a...); });
    run("mlp delta 128x4", mlp::MlpModel::create({99, 128, 128, 128, 128, 81}, 1), delta, repeats,
        [](auto&&... a) { return mlp::loss_gradient(a...); },
        [](auto&&... a) { return mlp::reference::loss_gradient(a...); });
}
