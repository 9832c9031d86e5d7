#include "kmf/khronos.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "kmf/error.hpp"
#include "kmf/parallel.hpp"
#include "kmf/splines.hpp"

namespace kmf::khronos {

namespace {

constexpr double kSupportHalfWidth = 1.5;
constexpr std::size_t kChunkRows = 32;

double sigmoid(double z) noexcept {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// Per-sample scratch buffers, sized once per model shape.
struct Workspace {
    explicit Workspace(const KernelConfig& c)
        : phi(c.d * c.k), dphi(c.d * c.k), lo(c.d), hi(c.d), atoms(c.d * c.r), prod(c.r), scratch(c.d),
          prefix((c.d + 1) * c.r), suffix((c.d + 1) * c.r), gp(c.r), out(c.n_out), upstream(c.n_out) {}

    std::vector<double> phi;   // psi(|x_i - g_s| gamma_i)            [i][s]
    std::vector<double> dphi;  // d psi / d gamma_i                    [i][s]
    std::vector<std::size_t> lo, hi;  // grid points inside the support, per dimension
    std::vector<double> atoms;  // sum_s alpha_sij phi_is              [i][j]
    std::vector<double> prod;   // product over i of atoms             [j]
    std::vector<double> scratch;
    std::vector<double> prefix;  // [i][j], product of atoms before i
    std::vector<double> suffix;  // [i][j], product of atoms from i on
    std::vector<double> gp;      // d output / d prod_j contracted with upstream
    std::vector<double> out;
    std::vector<double> upstream;
};

void check_input(const KernelConfig& c, std::span<const double> x) {
    if (x.size() != c.d) throw dimension_error(fmt::format("model expects {} inputs, got {}", c.d, x.size()));
    for (double v : x) {
        if (!std::isfinite(v)) throw domain_error("non-finite model input");
    }
}

void eval_atoms(const KhronosModel& model, std::span<const double> x, Workspace& ws) {
    const KernelConfig& c = model.config;
    const KhronosParams& p = model.params;
    const double scale = c.k > 1 ? static_cast<double>(c.k - 1) : 0.0;
    for (std::size_t i = 0; i < c.d; ++i) {
        const double gamma = p.gamma(i);
        std::size_t lo = 0, hi = c.k - 1;
        if (c.k > 1) {
            const double reach = kSupportHalfWidth / gamma;
            const double a = std::floor((x[i] - reach) * scale);
            const double b = std::ceil((x[i] + reach) * scale);
            lo = a <= 0.0 ? 0 : static_cast<std::size_t>(std::min(a, static_cast<double>(c.k - 1)));
            hi = b <= 0.0 ? 0 : static_cast<std::size_t>(std::min(b, static_cast<double>(c.k - 1)));
        }
        ws.lo[i] = lo;
        ws.hi[i] = hi;
        for (std::size_t j = 0; j < c.r; ++j) ws.atoms[i * c.r + j] = 0.0;
        for (std::size_t s = lo; s <= hi; ++s) {
            const double dist = std::abs(x[i] - c.grid_point(s));
            const double phi = splines::quadratic_kernel(dist * gamma);
            ws.phi[i * c.k + s] = phi;
            ws.dphi[i * c.k + s] = splines::quadratic_kernel_deriv(dist * gamma) * dist;
            if (phi == 0.0) continue;
            for (std::size_t j = 0; j < c.r; ++j) ws.atoms[i * c.r + j] += p.alpha(i, s, j) * phi;
        }
    }
}

/// Product of the atoms of mode j, multiplied in ascending value order so the
/// result does not depend on the order of the input dimensions.
double mode_product(const KernelConfig& c, std::size_t j, Workspace& ws) {
    bool finite = true;
    for (std::size_t i = 0; i < c.d; ++i) {
        ws.scratch[i] = ws.atoms[i * c.r + j];
        finite = finite && std::isfinite(ws.scratch[i]);
    }
    if (finite) std::sort(ws.scratch.begin(), ws.scratch.end());
    double product = 1.0;
    for (double v : ws.scratch) product *= v;
    return product;
}

void forward_into(const KhronosModel& model, std::span<const double> x, Workspace& ws) {
    const KernelConfig& c = model.config;
    eval_atoms(model, x, ws);
    for (std::size_t j = 0; j < c.r; ++j) ws.prod[j] = mode_product(c, j, ws);
    const auto bias = model.params.bias();
    for (std::size_t m = 0; m < c.n_out; ++m) ws.out[m] = bias[m];
    for (std::size_t j = 0; j < c.r; ++j) {
        const double pj = ws.prod[j];
        for (std::size_t m = 0; m < c.n_out; ++m) ws.out[m] += model.params.head_at(j, m) * pj;
    }
}

/// Adds d<upstream, y>/d params to grad. Requires forward_into on the same x.
void accumulate_backward(const KhronosModel& model, std::span<const double> upstream, Workspace& ws,
                         KhronosParams& grad) {
    const KernelConfig& c = model.config;
    const KhronosParams& p = model.params;
    const std::size_t r = c.r;

    auto gbias = grad.bias();
    for (std::size_t m = 0; m < c.n_out; ++m) gbias[m] += upstream[m];
    for (std::size_t j = 0; j < r; ++j) {
        double acc = 0.0;
        for (std::size_t m = 0; m < c.n_out; ++m) {
            grad.head_at(j, m) += ws.prod[j] * upstream[m];
            acc += p.head_at(j, m) * upstream[m];
        }
        ws.gp[j] = acc;
    }

    for (std::size_t j = 0; j < r; ++j) {
        ws.prefix[j] = 1.0;
        ws.suffix[c.d * r + j] = 1.0;
    }
    for (std::size_t i = 0; i < c.d; ++i) {
        for (std::size_t j = 0; j < r; ++j) ws.prefix[(i + 1) * r + j] = ws.prefix[i * r + j] * ws.atoms[i * r + j];
    }
    for (std::size_t i = c.d; i-- > 0;) {
        for (std::size_t j = 0; j < r; ++j) ws.suffix[i * r + j] = ws.atoms[i * r + j] * ws.suffix[(i + 1) * r + j];
    }

    auto graw = grad.gamma_raw();
    const auto raw = p.gamma_raw();
    for (std::size_t i = 0; i < c.d; ++i) {
        double dgamma = 0.0;
        for (std::size_t j = 0; j < r; ++j) {
            const double coeff = ws.gp[j] * ws.prefix[i * r + j] * ws.suffix[(i + 1) * r + j];
            if (coeff == 0.0) continue;
            for (std::size_t s = ws.lo[i]; s <= ws.hi[i]; ++s) {
                grad.alpha(i, s, j) += coeff * ws.phi[i * c.k + s];
                dgamma += coeff * p.alpha(i, s, j) * ws.dphi[i * c.k + s];
            }
        }
        graw[i] += dgamma * sigmoid(raw[i]);
    }
}

}  // namespace

void KernelConfig::validate() const {
    if (d == 0 || k == 0 || r == 0 || n_out == 0) {
        throw config_error(fmt::format("kernel config needs d, k, r, n_out >= 1 (got {}, {}, {}, {})", d, k, r, n_out));
    }
}

double KernelConfig::grid_point(std::size_t s) const noexcept {
    if (k == 1) return 0.5;
    return static_cast<double>(s) / static_cast<double>(k - 1);
}

std::vector<double> KernelConfig::grid() const {
    std::vector<double> g(k);
    for (std::size_t s = 0; s < k; ++s) g[s] = grid_point(s);
    return g;
}

std::size_t param_count(const KernelConfig& c) { return c.d * c.k * c.r + c.d + c.r * c.n_out + c.n_out; }

KhronosParams::KhronosParams(const KernelConfig& config) : config_(config), data_(param_count(config), 0.0) {
    config_.validate();
}

double softplus(double z) noexcept {
    if (z > 30.0) return z + std::log1p(std::exp(-z));
    return std::log1p(std::exp(z));
}

double softplus_inverse(double y) {
    if (!(y > 0.0)) throw domain_error("softplus inverse needs a positive value");
    if (y > 30.0) return y + std::log(-std::expm1(-y));
    return std::log(std::expm1(y));
}

double KhronosParams::gamma(std::size_t i) const noexcept { return softplus(gamma_raw()[i]); }

void KhronosParams::set_gamma(std::size_t i, double effective) { gamma_raw()[i] = softplus_inverse(effective); }

KhronosParams init_params(const KernelConfig& config, std::uint64_t seed, InitOptions options) {
    KhronosParams p(config);
    std::mt19937_64 rng(seed);
    const double alpha_scale = 1.0 / std::sqrt(static_cast<double>(config.k));
    std::uniform_real_distribution<double> unit(-0.5, 0.5);
    for (double& a : p.alphas()) a = options.alpha_offset + unit(rng) * alpha_scale;
    const double head_bound = 1.0 / std::sqrt(static_cast<double>(config.r));
    std::uniform_real_distribution<double> head(-head_bound, head_bound);
    for (double& h : p.head()) h = head(rng);
    const double gamma0 = config.k >= 2 ? static_cast<double>(config.k - 1) : 1.0;
    for (std::size_t i = 0; i < config.d; ++i) p.set_gamma(i, gamma0);
    return p;
}

KhronosModel KhronosModel::create(const KernelConfig& config, std::uint64_t seed, InitOptions options) {
    config.validate();
    return KhronosModel{config, init_params(config, seed, options), NormStats::identity(config.d),
                        NormStats::identity(config.n_out)};
}

void KhronosModel::validate() const {
    config.validate();
    if (!(params.config() == config) || params.size() != param_count(config)) {
        throw dimension_error("parameter buffer does not match the kernel config");
    }
    if (input_norm.size() != config.d || output_norm.size() != config.n_out) {
        throw dimension_error("normalization statistics do not match the kernel config");
    }
}

std::vector<double> weighted_target_mean(const SampleSet& set) {
    set.validate();
    const std::vector<std::size_t> rows = all_rows(set.size());
    const double total = total_weight(set, rows);
    std::vector<double> mean(set.output_dim(), 0.0);
    for (std::size_t row : rows) {
        const auto y = set.target(row);
        for (std::size_t m = 0; m < mean.size(); ++m) mean[m] += set.weights[row] * y[m];
    }
    for (double& v : mean) v /= total;
    return mean;
}

void KhronosModel::warm_start_bias(const SampleSet& set) {
    if (set.output_dim() != config.n_out) throw dimension_error("sample set does not match model outputs");
    const std::vector<double> mean = weighted_target_mean(set);
    std::copy(mean.begin(), mean.end(), params.bias().begin());
}

std::vector<double> forward(const KhronosModel& model, std::span<const double> x) {
    check_input(model.config, x);
    Workspace ws(model.config);
    forward_into(model, x, ws);
    return ws.out;
}

KhronosParams backward(const KhronosModel& model, std::span<const double> x, std::span<const double> upstream) {
    check_input(model.config, x);
    if (upstream.size() != model.config.n_out) {
        throw dimension_error(
            fmt::format("upstream gradient has {} entries, model has {} outputs", upstream.size(), model.config.n_out));
    }
    Workspace ws(model.config);
    forward_into(model, x, ws);
    KhronosParams grad(model.config);
    accumulate_backward(model, upstream, ws, grad);
    return grad;
}

std::vector<double> predict(const KhronosModel& model, std::span<const double> raw_x) {
    check_input(model.config, raw_x);
    std::vector<double> x(model.config.d);
    model.input_norm.apply(raw_x, x);
    std::vector<double> y = forward(model, x);
    std::vector<double> out(y.size());
    model.output_norm.invert(y, out);
    return out;
}

RowMatrix forward_batch(const KhronosModel& model, const RowMatrix& inputs) {
    const KernelConfig& c = model.config;
    if (static_cast<std::size_t>(inputs.cols()) != c.d) {
        throw dimension_error(fmt::format("model expects {} inputs, got {}", c.d, inputs.cols()));
    }
    RowMatrix out(inputs.rows(), static_cast<Eigen::Index>(c.n_out));
    std::exception_ptr failure;
#pragma omp parallel
    {
        Workspace ws(c);
#pragma omp for schedule(static)
        for (Eigen::Index row = 0; row < inputs.rows(); ++row) {
            try {
                const std::span<const double> x(inputs.row(row).data(), c.d);
                check_input(c, x);
                forward_into(model, x, ws);
                std::copy(ws.out.begin(), ws.out.end(), out.row(row).data());
            } catch (...) {
#pragma omp critical(kmf_forward_failure)
                if (!failure) failure = std::current_exception();
            }
        }
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

RowMatrix predict_batch(const KhronosModel& model, const RowMatrix& raw_inputs) {
    return model.output_norm.invert(forward_batch(model, model.input_norm.apply(raw_inputs)));
}

double loss_gradient(const KhronosModel& model, const SampleSet& set, std::span<const std::size_t> rows,
                     std::span<double> grad) {
    const KernelConfig& c = model.config;
    set.validate();
    if (set.input_dim() != c.d || set.output_dim() != c.n_out) throw dimension_error("sample set does not match model");
    if (grad.size() != model.params.size()) throw dimension_error("gradient buffer does not match parameters");
    const double inv_weight = 1.0 / total_weight(set, rows);
    const double inv_out = 1.0 / static_cast<double>(c.n_out);

    return parallel::reduce_chunks(rows.size(), kChunkRows, grad, [&](std::size_t begin, std::size_t end,
                                                                      std::span<double> partial) {
        Workspace ws(c);
        KhronosParams acc(c);
        double loss = 0.0;
        for (std::size_t t = begin; t < end; ++t) {
            const std::size_t row = rows[t];
            const auto x = set.input(row);
            const auto y = set.target(row);
            check_input(c, x);
            forward_into(model, x, ws);
            const double w = set.weights[row] * inv_weight;
            double sq = 0.0;
            for (std::size_t m = 0; m < c.n_out; ++m) {
                const double e = ws.out[m] - y[m];
                sq += e * e;
                ws.upstream[m] = 2.0 * w * inv_out * e;
            }
            loss += w * inv_out * sq;
            if (w != 0.0) accumulate_backward(model, ws.upstream, ws, acc);
        }
        std::copy(acc.values().begin(), acc.values().end(), partial.begin());
        return loss;
    });
}

namespace reference {

double loss_gradient(const KhronosModel& model, const SampleSet& set, std::span<const std::size_t> rows,
                     std::span<double> grad) {
    const KernelConfig& c = model.config;
    set.validate();
    if (grad.size() != model.params.size()) throw dimension_error("gradient buffer does not match parameters");
    std::fill(grad.begin(), grad.end(), 0.0);
    const double total = total_weight(set, rows);
    double loss = 0.0;
    std::vector<double> upstream(c.n_out);
    for (std::size_t row : rows) {
        const std::vector<double> out = forward(model, set.input(row));
        const auto y = set.target(row);
        const double w = set.weights[row] / total;
        double sq = 0.0;
        for (std::size_t m = 0; m < c.n_out; ++m) {
            const double e = out[m] - y[m];
            sq += e * e;
            upstream[m] = 2.0 * w * e / static_cast<double>(c.n_out);
        }
        loss += w * sq / static_cast<double>(c.n_out);
        const KhronosParams g = backward(model, set.input(row), upstream);
        for (std::size_t q = 0; q < grad.size(); ++q) grad[q] += g.values()[q];
    }
    return loss;
}

}  // namespace reference

}  // namespace kmf::khronos
