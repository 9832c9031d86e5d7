#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "kmf/normalization.hpp"
#include "kmf/samples.hpp"
#include "kmf/types.hpp"

namespace kmf::khronos {

/// Shape of a separable kernel expansion.
///
/// Inputs live in [0,1]^d. Each dimension carries k uniform grid points
/// (both endpoints included for k >= 2, the single point 0.5 for k == 1),
/// the expansion has r rank modes, and n_out outputs share those modes
/// through a [r x n_out] head.
struct KernelConfig {
    std::size_t d = 1;
    std::size_t k = 3;
    std::size_t r = 4;
    std::size_t n_out = 81;

    void validate() const;
    double grid_point(std::size_t s) const noexcept;
    std::vector<double> grid() const;

    bool operator==(const KernelConfig&) const = default;
};

/// d*k*r + d + r*n_out + n_out.
std::size_t param_count(const KernelConfig& config);

/// All learnable scalars in one flat buffer, laid out as
///   alphas    [i][s][j]  (d*k*r)
///   gamma_raw [i]        (d)      effective scaling is softplus(gamma_raw)
///   head      [j][m]     (r*n_out)
///   bias      [m]        (n_out)
/// The same type holds gradients.
class KhronosParams {
public:
    KhronosParams() = default;
    explicit KhronosParams(const KernelConfig& config);

    const KernelConfig& config() const noexcept { return config_; }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    std::span<double> alphas() noexcept { return values().subspan(0, n_alpha()); }
    std::span<const double> alphas() const noexcept { return values().subspan(0, n_alpha()); }
    std::span<double> gamma_raw() noexcept { return values().subspan(n_alpha(), config_.d); }
    std::span<const double> gamma_raw() const noexcept { return values().subspan(n_alpha(), config_.d); }
    std::span<double> head() noexcept { return values().subspan(head_offset(), config_.r * config_.n_out); }
    std::span<const double> head() const noexcept {
        return values().subspan(head_offset(), config_.r * config_.n_out);
    }
    std::span<double> bias() noexcept { return values().subspan(bias_offset(), config_.n_out); }
    std::span<const double> bias() const noexcept { return values().subspan(bias_offset(), config_.n_out); }

    double& alpha(std::size_t i, std::size_t s, std::size_t j) noexcept {
        return data_[(i * config_.k + s) * config_.r + j];
    }
    double alpha(std::size_t i, std::size_t s, std::size_t j) const noexcept {
        return data_[(i * config_.k + s) * config_.r + j];
    }
    double& head_at(std::size_t j, std::size_t m) noexcept { return data_[head_offset() + j * config_.n_out + m]; }
    double head_at(std::size_t j, std::size_t m) const noexcept {
        return data_[head_offset() + j * config_.n_out + m];
    }

    /// Effective (positive) scaling for dimension i.
    double gamma(std::size_t i) const noexcept;
    void set_gamma(std::size_t i, double effective);

private:
    std::size_t n_alpha() const noexcept { return config_.d * config_.k * config_.r; }
    std::size_t head_offset() const noexcept { return n_alpha() + config_.d; }
    std::size_t bias_offset() const noexcept { return head_offset() + config_.r * config_.n_out; }

    KernelConfig config_;
    std::vector<double> data_;
};

double softplus(double z) noexcept;
double softplus_inverse(double y);

struct InitOptions {
    /// Added to every alpha draw. With 0 each atom starts near zero and the d-fold
    /// product vanishes for large d; 1 starts every atom near a constant.
    double alpha_offset = 0.0;
};

/// alphas = offset + U[-0.5, 0.5]/sqrt(k); head = U[-1/sqrt(r), 1/sqrt(r)]; bias = 0;
/// effective gamma = k-1 (k >= 2) or 1. Reproducible for a given seed.
KhronosParams init_params(const KernelConfig& config, std::uint64_t seed, InitOptions options = {});

struct KhronosModel {
    KernelConfig config;
    KhronosParams params;
    NormStats input_norm;
    NormStats output_norm;

    /// Fresh model with identity normalization.
    static KhronosModel create(const KernelConfig& config, std::uint64_t seed, InitOptions options = {});

    std::size_t input_dim() const noexcept { return config.d; }
    std::size_t output_dim() const noexcept { return config.n_out; }
    std::size_t parameter_count() const noexcept { return params.size(); }
    std::span<double> parameters() noexcept { return params.values(); }
    std::span<const double> parameters() const noexcept { return params.values(); }

    void validate() const;

    /// Bias := weighted mean of the (normalized) targets.
    void warm_start_bias(const SampleSet& set);
};

/// Weighted column means of set.targets.
std::vector<double> weighted_target_mean(const SampleSet& set);

/// Output in normalized output space for a normalized input x.
std::vector<double> forward(const KhronosModel& model, std::span<const double> x);

/// Gradient of <upstream, forward(x)> with respect to every parameter.
KhronosParams backward(const KhronosModel& model, std::span<const double> x, std::span<const double> upstream);

/// Raw input -> raw output (applies both normalizations).
std::vector<double> predict(const KhronosModel& model, std::span<const double> raw_x);
RowMatrix predict_batch(const KhronosModel& model, const RowMatrix& raw_inputs);

/// Normalized forward over every row of a normalized input matrix (OpenMP over rows).
RowMatrix forward_batch(const KhronosModel& model, const RowMatrix& inputs);

/// Weighted MSE over `rows` and its gradient (written to grad, sized like the parameters).
/// OpenMP over fixed row chunks; bit-identical for any thread count.
double loss_gradient(const KhronosModel& model, const SampleSet& set, std::span<const std::size_t> rows,
                     std::span<double> grad);

namespace reference {

/// Serial per-sample loop, kept as the oracle for the parallel kernel.
double loss_gradient(const KhronosModel& model, const SampleSet& set, std::span<const std::size_t> rows,
                     std::span<double> grad);

}  // namespace reference

}  // namespace kmf::khronos
