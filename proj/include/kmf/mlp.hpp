#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "kmf/normalization.hpp"
#include "kmf/samples.hpp"
#include "kmf/types.hpp"

namespace kmf::mlp {

/// sum over consecutive widths of (fan_in * fan_out + fan_out).
std::size_t mlp_param_count(std::span<const std::size_t> widths);

/// Dense feedforward network: ReLU on hidden layers, identity on the output.
///
/// Parameters sit in one flat buffer, layer by layer: W_l row-major [fan_out][fan_in],
/// then b_l [fan_out].
class MlpModel {
public:
    using WeightMap = Eigen::Map<RowMatrix>;
    using ConstWeightMap = Eigen::Map<const RowMatrix>;
    using BiasMap = Eigen::Map<Eigen::VectorXd>;
    using ConstBiasMap = Eigen::Map<const Eigen::VectorXd>;

    MlpModel() = default;
    /// All-zero parameters, identity normalization.
    explicit MlpModel(std::vector<std::size_t> widths);

    /// He-style uniform weights U[-sqrt(6/fan_in), sqrt(6/fan_in)], zero biases.
    static MlpModel create(std::vector<std::size_t> widths, std::uint64_t seed);

    const std::vector<std::size_t>& widths() const noexcept { return widths_; }
    std::size_t layers() const noexcept { return widths_.size() - 1; }
    std::size_t input_dim() const noexcept { return widths_.front(); }
    std::size_t output_dim() const noexcept { return widths_.back(); }
    std::size_t parameter_count() const noexcept { return data_.size(); }

    std::span<double> parameters() noexcept { return data_; }
    std::span<const double> parameters() const noexcept { return data_; }

    WeightMap weights(std::size_t layer);
    ConstWeightMap weights(std::size_t layer) const;
    BiasMap bias(std::size_t layer);
    ConstBiasMap bias(std::size_t layer) const;

    /// Offset of layer l's weight block in the flat buffer.
    std::size_t weight_offset(std::size_t layer) const noexcept { return offsets_[layer]; }
    std::size_t bias_offset(std::size_t layer) const noexcept {
        return offsets_[layer] + widths_[layer] * widths_[layer + 1];
    }

    /// Output-layer bias := weighted mean of the normalized targets.
    void warm_start_bias(const SampleSet& set);

    NormStats input_norm;
    NormStats output_norm;

private:
    std::vector<std::size_t> widths_;
    std::vector<std::size_t> offsets_;
    std::vector<double> data_;
};

std::vector<double> mlp_forward(const MlpModel& model, std::span<const double> x);

/// Gradient of <upstream, mlp_forward(x)> in the flat parameter layout.
std::vector<double> mlp_backward(const MlpModel& model, std::span<const double> x, std::span<const double> upstream);

/// Normalized forward over all rows (OpenMP over row chunks).
RowMatrix forward_batch(const MlpModel& model, const RowMatrix& inputs);
RowMatrix predict_batch(const MlpModel& model, const RowMatrix& raw_inputs);

/// Weighted MSE over `rows` and its gradient; batched GEMMs per fixed row chunk,
/// chunks in parallel, fixed-order reduction.
double loss_gradient(const MlpModel& model, const SampleSet& set, std::span<const std::size_t> rows,
                     std::span<double> grad);

namespace reference {

/// Serial per-sample loops with no BLAS-style batching.
double loss_gradient(const MlpModel& model, const SampleSet& set, std::span<const std::size_t> rows,
                     std::span<double> grad);

}  // namespace reference

}  // namespace kmf::mlp
