#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "kmf/error.hpp"
#include "kmf/samples.hpp"
#include "kmf/types.hpp"

namespace kmf::training {

struct TrainConfig {
    double peak_lr = 3e-3;
    std::size_t epochs = 1000;
    /// 0 means full batch.
    std::size_t batch_size = 0;
    /// Loss weight for samples carrying high-fidelity labels.
    double w_hf = 10.0;
    std::uint64_t seed = 0;
    double warmup_fraction = 0.05;
    /// Set the output bias to the weighted target mean before the first step
    /// (models exposing warm_start_bias only).
    bool warm_start_bias = true;

    void validate() const;
};

/// sum_s w_s * mean_m (pred - target)^2 / sum_s w_s.
double weighted_mse(const RowMatrix& pred, const RowMatrix& target, std::span<const double> weights);

/// Linear warmup over warmup_fraction * total_steps, then cosine decay to 0 at total_steps.
double lr_at(const TrainConfig& config, std::size_t step, std::size_t total_steps);

struct AdamState {
    static constexpr double beta1 = 0.9;
    static constexpr double beta2 = 0.999;
    static constexpr double epsilon = 1e-8;

    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

    std::vector<double> m;
    std::vector<double> v;
    std::size_t step = 0;
};

/// Bias-corrected Adam update in place. Throws TrainingDiverged on a non-finite gradient.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr);

struct EpochRecord {
    std::size_t epoch = 0;
    double loss = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    std::size_t steps = 0;
    double seconds = 0.0;
    /// True when the stop callback ended training before the configured epochs.
    bool stopped_early = false;
};

/// Called after every optimizer step with the number of steps taken; return true to stop.
using StopFn = std::function<bool(std::size_t steps)>;

/// A model the epoch loop can drive: flat parameters plus a weighted-MSE
/// loss/gradient kernel found by argument-dependent lookup.
template <class M>
concept Trainable = requires(M& m, const M& cm, const SampleSet& set, std::span<const std::size_t> rows,
                             std::span<double> grad) {
    { m.parameters() } -> std::same_as<std::span<double>>;
    { cm.parameter_count() } -> std::convertible_to<std::size_t>;
    { loss_gradient(cm, set, rows, grad) } -> std::convertible_to<double>;
};

/// Fixed-epoch Adam training on normalized samples. Deterministic given config.seed.
template <Trainable Model>
TrainResult train(Model& model, const SampleSet& set, const TrainConfig& config, const StopFn& stop = {}) {
    config.validate();
    set.validate();
    if (set.size() == 0) throw config_error("training set is empty");

    const auto t0 = std::chrono::steady_clock::now();
    TrainResult result;
    if (config.epochs == 0) return result;

    const std::size_t n = set.size();
    const std::size_t batch = config.batch_size == 0 ? n : std::min(config.batch_size, n);
    const std::size_t steps_per_epoch = (n + batch - 1) / batch;
    const std::size_t total_steps = config.epochs * steps_per_epoch;

    std::vector<std::size_t> order = all_rows(n);
    std::mt19937_64 rng(config.seed);
    AdamState adam(model.parameter_count());
    std::vector<double> grad(model.parameter_count());
    const double full_weight = total_weight(set, order);
    if constexpr (requires { model.warm_start_bias(set); }) {
        if (config.warm_start_bias) model.warm_start_bias(set);
    }

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        if (batch < n) std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        double lr = 0.0;
        for (std::size_t b = 0; b < steps_per_epoch; ++b) {
            const std::size_t begin = b * batch;
            const std::span<const std::size_t> rows(order.data() + begin, std::min(batch, n - begin));
            double batch_weight = 0.0;
            for (std::size_t r : rows) batch_weight += set.weights[r];
            if (batch_weight == 0.0) continue;

            const double loss = loss_gradient(std::as_const(model), set, rows, std::span<double>(grad));
            if (!std::isfinite(loss)) {
                throw TrainingDiverged(epoch, fmt::format("non-finite training loss at epoch {}", epoch));
            }
            epoch_loss += loss * batch_weight / full_weight;
            lr = lr_at(config, result.steps + 1, total_steps);
            try {
                adam_step(model.parameters(), grad, adam, lr);
            } catch (const TrainingDiverged&) {
                throw TrainingDiverged(epoch, fmt::format("non-finite gradient at epoch {}", epoch));
            }
            ++result.steps;
            if (stop && stop(result.steps)) {
                result.history.push_back({epoch, epoch_loss, lr});
                result.stopped_early = epoch + 1 < config.epochs || b + 1 < steps_per_epoch;
                result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                return result;
            }
        }
        result.history.push_back({epoch, epoch_loss, lr});
    }
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

// ---------------------------------------------------------------------------
// Cartesian hyperparameter sweep
// ---------------------------------------------------------------------------

struct SweepAxis {
    std::string name;
    std::vector<double> values;
};

/// One configuration: (axis name, value) in axis order.
using SweepPoint = std::vector<std::pair<std::string, double>>;

double sweep_value(const SweepPoint& point, const std::string& name);

struct SweepResult {
    SweepPoint point;
    double score = 0.0;
    /// Position in the full Cartesian enumeration (last axis fastest).
    std::size_t index = 0;
};

/// Full Cartesian product, last axis varying fastest.
std::vector<SweepPoint> cartesian_product(const std::vector<SweepAxis>& space);

/// Scores every configuration (or a seeded random subset of `budget` of them) and
/// returns them sorted by ascending score; ties keep enumeration order.
std::vector<SweepResult> grid_sweep(const std::vector<SweepAxis>& space,
                                    const std::function<double(const SweepPoint&)>& evaluate,
                                    std::optional<std::size_t> budget = std::nullopt, std::uint64_t seed = 0);

}  // namespace kmf::training
