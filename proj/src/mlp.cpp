#include "kmf/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "kmf/error.hpp"
#include "kmf/khronos.hpp"
#include "kmf/parallel.hpp"

namespace kmf::mlp {

namespace {

constexpr std::size_t kChunkRows = 64;

void check_widths(const std::vector<std::size_t>& widths) {
    if (widths.size() < 2) throw config_error("an MLP needs at least an input and an output width");
    for (std::size_t w : widths) {
        if (w == 0) throw config_error("MLP layer widths must be positive");
    }
}

void check_input(const MlpModel& model, std::span<const double> x) {
    if (x.size() != model.input_dim()) {
        throw dimension_error(fmt::format("input has {} features, model expects {}", x.size(), model.input_dim()));
    }
}

/// Activations of a row block: acts[0] = inputs, acts[l+1] = layer l output (post-ReLU on hidden).
std::vector<RowMatrix> forward_block(const MlpModel& model, RowMatrix input) {
    std::vector<RowMatrix> acts;
    acts.reserve(model.layers() + 1);
    acts.push_back(std::move(input));
    for (std::size_t l = 0; l < model.layers(); ++l) {
        RowMatrix z = acts.back() * model.weights(l).transpose();
        z.rowwise() += model.bias(l).transpose();
        if (l + 1 < model.layers()) z = z.cwiseMax(0.0);
        acts.push_back(std::move(z));
    }
    return acts;
}

}  // namespace

std::size_t mlp_param_count(std::span<const std::size_t> widths) {
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) total += widths[l] * widths[l + 1] + widths[l + 1];
    return total;
}

MlpModel::MlpModel(std::vector<std::size_t> widths) : widths_(std::move(widths)) {
    check_widths(widths_);
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
        offsets_.push_back(offset);
        offset += widths_[l] * widths_[l + 1] + widths_[l + 1];
    }
    data_.assign(offset, 0.0);
    input_norm = NormStats::identity(widths_.front());
    output_norm = NormStats::identity(widths_.back());
}

MlpModel MlpModel::create(std::vector<std::size_t> widths, std::uint64_t seed) {
    MlpModel model(std::move(widths));
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l < model.layers(); ++l) {
        const double bound = std::sqrt(6.0 / static_cast<double>(model.widths_[l]));
        std::uniform_real_distribution<double> dist(-bound, bound);
        auto w = model.weights(l);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
    }
    return model;
}

MlpModel::WeightMap MlpModel::weights(std::size_t layer) {
    return {data_.data() + offsets_[layer], static_cast<Eigen::Index>(widths_[layer + 1]),
            static_cast<Eigen::Index>(widths_[layer])};
}

MlpModel::ConstWeightMap MlpModel::weights(std::size_t layer) const {
    return {data_.data() + offsets_[layer], static_cast<Eigen::Index>(widths_[layer + 1]),
            static_cast<Eigen::Index>(widths_[layer])};
}

MlpModel::BiasMap MlpModel::bias(std::size_t layer) {
    return {data_.data() + bias_offset(layer), static_cast<Eigen::Index>(widths_[layer + 1])};
}

MlpModel::ConstBiasMap MlpModel::bias(std::size_t layer) const {
    return {data_.data() + bias_offset(layer), static_cast<Eigen::Index>(widths_[layer + 1])};
}

void MlpModel::warm_start_bias(const SampleSet& set) {
    if (set.output_dim() != output_dim()) throw dimension_error("sample set does not match model outputs");
    const std::vector<double> mean = khronos::weighted_target_mean(set);
    auto b = bias(layers() - 1);
    for (std::size_t m = 0; m < mean.size(); ++m) b[static_cast<Eigen::Index>(m)] = mean[m];
}

std::vector<double> mlp_forward(const MlpModel& model, std::span<const double> x) {
    check_input(model, x);
    std::vector<double> act(x.begin(), x.end());
    for (std::size_t l = 0; l < model.layers(); ++l) {
        const auto w = model.weights(l);
        const auto b = model.bias(l);
        std::vector<double> next(static_cast<std::size_t>(w.rows()));
        for (Eigen::Index o = 0; o < w.rows(); ++o) {
            double z = b[o];
            for (Eigen::Index i = 0; i < w.cols(); ++i) z += w(o, i) * act[static_cast<std::size_t>(i)];
            next[static_cast<std::size_t>(o)] = (l + 1 < model.layers()) ? std::max(z, 0.0) : z;
        }
        act = std::move(next);
    }
    return act;
}

std::vector<double> mlp_backward(const MlpModel& model, std::span<const double> x, std::span<const double> upstream) {
    check_input(model, x);
    if (upstream.size() != model.output_dim()) throw dimension_error("upstream gradient does not match model outputs");
    // Forward pass keeping every activation.
    std::vector<std::vector<double>> acts{std::vector<double>(x.begin(), x.end())};
    for (std::size_t l = 0; l < model.layers(); ++l) {
        const auto w = model.weights(l);
        const auto b = model.bias(l);
        std::vector<double> next(static_cast<std::size_t>(w.rows()));
        for (Eigen::Index o = 0; o < w.rows(); ++o) {
            double z = b[o];
            for (Eigen::Index i = 0; i < w.cols(); ++i) z += w(o, i) * acts.back()[static_cast<std::size_t>(i)];
            next[static_cast<std::size_t>(o)] = (l + 1 < model.layers()) ? std::max(z, 0.0) : z;
        }
        acts.push_back(std::move(next));
    }

    std::vector<double> grad(model.parameter_count(), 0.0);
    std::vector<double> delta(upstream.begin(), upstream.end());
    for (std::size_t l = model.layers(); l-- > 0;) {
        const auto w = model.weights(l);
        const std::vector<double>& in = acts[l];
        double* gw = grad.data() + model.weight_offset(l);
        double* gb = grad.data() + model.bias_offset(l);
        for (Eigen::Index o = 0; o < w.rows(); ++o) {
            const double d = delta[static_cast<std::size_t>(o)];
            gb[o] += d;
            for (Eigen::Index i = 0; i < w.cols(); ++i) gw[o * w.cols() + i] += d * in[static_cast<std::size_t>(i)];
        }
        if (l == 0) break;
        std::vector<double> prev(static_cast<std::size_t>(w.cols()), 0.0);
        for (Eigen::Index i = 0; i < w.cols(); ++i) {
            // ReLU'(z) = 1 where the stored activation is positive.
            if (in[static_cast<std::size_t>(i)] <= 0.0) continue;
            double s = 0.0;
            for (Eigen::Index o = 0; o < w.rows(); ++o) s += w(o, i) * delta[static_cast<std::size_t>(o)];
            prev[static_cast<std::size_t>(i)] = s;
        }
        delta = std::move(prev);
    }
    return grad;
}

RowMatrix forward_batch(const MlpModel& model, const RowMatrix& inputs) {
    if (static_cast<std::size_t>(inputs.cols()) != model.input_dim()) {
        throw dimension_error(fmt::format("input has {} features, model expects {}", inputs.cols(), model.input_dim()));
    }
    const auto n = static_cast<std::size_t>(inputs.rows());
    RowMatrix out(inputs.rows(), static_cast<Eigen::Index>(model.output_dim()));
    const std::size_t n_chunks = (n + kChunkRows - 1) / kChunkRows;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(n_chunks); ++c) {
        const auto begin = static_cast<Eigen::Index>(static_cast<std::size_t>(c) * kChunkRows);
        const auto len = static_cast<Eigen::Index>(std::min(kChunkRows, n - static_cast<std::size_t>(begin)));
        std::vector<RowMatrix> acts = forward_block(model, inputs.middleRows(begin, len));
        out.middleRows(begin, len) = acts.back();
    }
    return out;
}

RowMatrix predict_batch(const MlpModel& model, const RowMatrix& raw_inputs) {
    return model.output_norm.invert(forward_batch(model, model.input_norm.apply(raw_inputs)));
}

double loss_gradient(const MlpModel& model, const SampleSet& set, std::span<const std::size_t> rows,
                     std::span<double> grad) {
    set.validate();
    if (set.input_dim() != model.input_dim() || set.output_dim() != model.output_dim()) {
        throw dimension_error("sample set does not match model");
    }
    if (grad.size() != model.parameter_count()) throw dimension_error("gradient buffer does not match parameters");
    const double inv_weight = 1.0 / total_weight(set, rows);
    const double inv_out = 1.0 / static_cast<double>(model.output_dim());
    const auto n_in = static_cast<Eigen::Index>(model.input_dim());

    return parallel::reduce_chunks(rows.size(), kChunkRows, grad, [&](std::size_t begin, std::size_t end,
                                                                      std::span<double> partial) {
        const auto len = static_cast<Eigen::Index>(end - begin);
        RowMatrix x(len, n_in);
        RowMatrix y(len, static_cast<Eigen::Index>(model.output_dim()));
        Eigen::VectorXd w(len);
        for (Eigen::Index t = 0; t < len; ++t) {
            const std::size_t row = rows[begin + static_cast<std::size_t>(t)];
            x.row(t) = set.inputs.row(static_cast<Eigen::Index>(row));
            y.row(t) = set.targets.row(static_cast<Eigen::Index>(row));
            w[t] = set.weights[row] * inv_weight;
        }
        std::vector<RowMatrix> acts = forward_block(model, std::move(x));
        RowMatrix delta = acts.back() - y;
        const double loss = inv_out * (w.asDiagonal() * delta.cwiseAbs2()).sum();
        delta = (2.0 * inv_out) * (w.asDiagonal() * delta);

        for (std::size_t l = model.layers(); l-- > 0;) {
            Eigen::Map<RowMatrix> gw(partial.data() + model.weight_offset(l),
                                     static_cast<Eigen::Index>(model.widths()[l + 1]),
                                     static_cast<Eigen::Index>(model.widths()[l]));
            Eigen::Map<Eigen::VectorXd> gb(partial.data() + model.bias_offset(l),
                                           static_cast<Eigen::Index>(model.widths()[l + 1]));
            gw.noalias() = delta.transpose() * acts[l];
            gb = delta.colwise().sum().transpose();
            if (l == 0) break;
            RowMatrix prev = delta * model.weights(l);
            delta = prev.cwiseProduct((acts[l].array() > 0.0).cast<double>().matrix());
        }
        return loss;
    });
}

namespace reference {

double loss_gradient(const MlpModel& model, const SampleSet& set, std::span<const std::size_t> rows,
                     std::span<double> grad) {
    set.validate();
    if (grad.size() != model.parameter_count()) throw dimension_error("gradient buffer does not match parameters");
    std::fill(grad.begin(), grad.end(), 0.0);
    const double total = total_weight(set, rows);
    const auto n_out = static_cast<double>(model.output_dim());
    double loss = 0.0;
    std::vector<double> upstream(model.output_dim());
    for (std::size_t row : rows) {
        const std::vector<double> out = mlp_forward(model, set.input(row));
        const auto y = set.target(row);
        const double w = set.weights[row] / total;
        double sq = 0.0;
        for (std::size_t m = 0; m < out.size(); ++m) {
            const double e = out[m] - y[m];
            sq += e * e;
            upstream[m] = 2.0 * w * e / n_out;
        }
        loss += w * sq / n_out;
        const std::vector<double> g = mlp_backward(model, set.input(row), upstream);
        for (std::size_t q = 0; q < grad.size(); ++q) grad[q] += g[q];
    }
    return loss;
}

}  // namespace reference

}  // namespace kmf::mlp
