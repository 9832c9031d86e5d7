#include "kmf/training.hpp"

#include <numbers>
#include <numeric>

namespace kmf::training {

void TrainConfig::validate() const {
    if (!(peak_lr > 0.0)) throw config_error("peak learning rate must be positive");
    if (!(w_hf >= 0.0)) throw config_error("w_hf must be nonnegative");
    if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) throw config_error("warmup fraction must be in [0, 1)");
}

double weighted_mse(const RowMatrix& pred, const RowMatrix& target, std::span<const double> weights) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
        throw dimension_error(fmt::format("prediction {}x{} vs target {}x{}", pred.rows(), pred.cols(), target.rows(),
                                          target.cols()));
    }
    if (weights.size() != static_cast<std::size_t>(pred.rows())) {
        throw dimension_error("one weight per sample is required");
    }
    double num = 0.0, den = 0.0;
    for (Eigen::Index s = 0; s < pred.rows(); ++s) {
        const double w = weights[static_cast<std::size_t>(s)];
        if (w < 0.0) throw config_error("sample weights must be nonnegative");
        num += w * (pred.row(s) - target.row(s)).squaredNorm() / static_cast<double>(pred.cols());
        den += w;
    }
    if (den == 0.0) throw Error(ErrorKind::config, "degenerate_weights", "all sample weights are zero");
    return num / den;
}

double lr_at(const TrainConfig& config, std::size_t step, std::size_t total_steps) {
    if (total_steps == 0) return 0.0;
    step = std::min(step, total_steps);
    const auto warmup =
        static_cast<std::size_t>(std::llround(config.warmup_fraction * static_cast<double>(total_steps)));
    if (step < warmup) return config.peak_lr * static_cast<double>(step) / static_cast<double>(warmup);
    if (warmup >= total_steps) return config.peak_lr;
    const double progress = static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup);
    return 0.5 * config.peak_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr) {
    if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw dimension_error("Adam state, parameters and gradients must have the same length");
    }
    for (double g : grads) {
        if (!std::isfinite(g)) throw TrainingDiverged(state.step, "non-finite gradient entry");
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(AdamState::beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(AdamState::beta2, static_cast<double>(state.step));
    for (std::size_t q = 0; q < params.size(); ++q) {
        const double g = grads[q];
        state.m[q] = AdamState::beta1 * state.m[q] + (1.0 - AdamState::beta1) * g;
        state.v[q] = AdamState::beta2 * state.v[q] + (1.0 - AdamState::beta2) * g * g;
        if (lr == 0.0) continue;
        const double m_hat = state.m[q] / c1;
        const double v_hat = state.v[q] / c2;
        params[q] -= lr * m_hat / (std::sqrt(v_hat) + AdamState::epsilon);
    }
}

double sweep_value(const SweepPoint& point, const std::string& name) {
    for (const auto& [key, value] : point) {
        if (key == name) return value;
    }
    throw config_error(fmt::format("sweep point has no axis '{}'", name));
}

std::vector<SweepPoint> cartesian_product(const std::vector<SweepAxis>& space) {
    if (space.empty()) throw config_error("sweep space has no axes");
    std::size_t total = 1;
    for (const auto& axis : space) {
        if (axis.values.empty()) throw config_error(fmt::format("sweep axis '{}' has no candidate values", axis.name));
        total *= axis.values.size();
    }
    std::vector<SweepPoint> points;
    points.reserve(total);
    for (std::size_t index = 0; index < total; ++index) {
        SweepPoint point(space.size());
        std::size_t rem = index;
        for (std::size_t a = space.size(); a-- > 0;) {
            const auto& axis = space[a];
            point[a] = {axis.name, axis.values[rem % axis.values.size()]};
            rem /= axis.values.size();
        }
        points.push_back(std::move(point));
    }
    return points;
}

std::vector<SweepResult> grid_sweep(const std::vector<SweepAxis>& space,
                                    const std::function<double(const SweepPoint&)>& evaluate,
                                    std::optional<std::size_t> budget, std::uint64_t seed) {
    std::vector<SweepPoint> points = cartesian_product(space);
    std::vector<std::size_t> chosen = all_rows(points.size());
    if (budget && *budget < points.size()) {
        std::mt19937_64 rng(seed);
        std::shuffle(chosen.begin(), chosen.end(), rng);
        chosen.resize(*budget);
        std::sort(chosen.begin(), chosen.end());
    }
    std::vector<SweepResult> results;
    results.reserve(chosen.size());
    for (std::size_t index : chosen) results.push_back({points[index], evaluate(points[index]), index});
    std::stable_sort(results.begin(), results.end(),
                     [](const SweepResult& a, const SweepResult& b) { return a.score < b.score; });
    return results;
}

}  // namespace kmf::training
