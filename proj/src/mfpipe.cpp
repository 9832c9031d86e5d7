#include "kmf/mfpipe.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include <fmt/format.h>
#include <json.hpp>

#include "kmf/csv.hpp"
#include "kmf/error.hpp"

namespace kmf::mfpipe {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> order = all_rows(n);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

std::size_t round_count(double fraction, std::size_t n) {
    return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

void check_ratio(double r, const char* what) {
    if (!(r >= 0.0 && r <= 1.0)) throw config_error(fmt::format("{} must be in [0, 1], got {}", what, r));
}

RowMatrix concat_cols(const RowMatrix& a, const RowMatrix& b) {
    RowMatrix out(a.rows(), a.cols() + b.cols());
    out << a, b;
    return out;
}

/// Seed-derived base polygon, shared by every synthetic case.
struct BasePolygon {
    std::vector<geometry::Point> upper;
    std::vector<geometry::Point> lower;
};

const BasePolygon& base_polygon() {
    static const BasePolygon base = [] {
        const auto fit = geometry::fit_bspline_lsq(geometry::naca4("0012", 201, true));
        return BasePolygon{fit.curve.upper.control, fit.curve.lower.control};
    }();
    return base;
}

/// Mean chord-normalized thickness and camber of the interior control points.
std::pair<double, double> shape_functionals(const geometry::AirfoilCurve& curve) {
    const geometry::Point le = curve.leading_edge();
    const double c = curve.chord();
    const std::size_t n = curve.upper.control.size();
    double t = 0.0, m = 0.0;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double yu = (curve.upper.control[i].y - le.y) / c;
        const double yl = (curve.lower.control[i].y - le.y) / c;
        t += yu - yl;
        m += 0.5 * (yu + yl);
    }
    return {t / static_cast<double>(n - 2), m / static_cast<double>(n - 2)};
}

std::string case_file(std::size_t i) { return fmt::format("case_{:04d}.csv", i); }

}  // namespace

std::vector<Station> cosine_stations(std::size_t n) {
    if (n < 3 || n % 2 == 0) throw config_error(fmt::format("station count must be odd and >= 3, got {}", n));
    std::vector<Station> st(n);
    const std::size_t half = (n - 1) / 2;
    for (std::size_t s = 0; s < n; ++s) {
        const double theta = 2.0 * std::numbers::pi * static_cast<double>(s) / static_cast<double>(n - 1);
        double x = 0.5 * (1.0 + std::cos(theta));
        if (s == 0 || s == n - 1) x = 1.0;
        if (s == half) x = 0.0;
        st[s] = {x, s <= half ? Side::upper : Side::lower};
    }
    return st;
}

void Dataset::validate() const {
    if (cases.empty()) throw config_error("dataset has no cases");
    const std::size_t nf = n_features();
    for (const CaseRecord& c : cases) {
        if (c.features.size() != nf) {
            throw dimension_error(fmt::format("case '{}' has {} features, expected {}", c.name, c.features.size(), nf));
        }
        if (c.cp_lf.size() != n_stations() || (c.cp_hf && c.cp_hf->size() != n_stations())) {
            throw dimension_error(fmt::format("case '{}' does not have {} stations", c.name, n_stations()));
        }
    }
}

double case_hf_ratio(int case_id) {
    switch (case_id) {
        case 1: return 0.0;
        case 2: return 0.1;
        case 3: return 0.3;
        default: throw config_error(fmt::format("case must be 1, 2 or 3, got {}", case_id));
    }
}

std::vector<std::size_t> draw_hf(std::span<const std::size_t> train, double hf_ratio, std::uint64_t seed) {
    check_ratio(hf_ratio, "hf_ratio");
    std::vector<std::size_t> order(train.begin(), train.end());
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(round_count(hf_ratio, train.size()));
    std::sort(order.begin(), order.end());
    return order;
}

MfDataset split_with(const Dataset& data, std::vector<std::size_t> train, std::vector<std::size_t> test,
                     double hf_ratio, std::uint64_t seed) {
    MfDataset out;
    out.hf_ratio = hf_ratio;
    out.seed = seed;
    std::vector<std::size_t> labelled;
    for (std::size_t i : train) {
        if (i >= data.size()) throw config_error(fmt::format("case index {} out of range", i));
        if (data.cases[i].cp_hf) labelled.push_back(i);
    }
    if (hf_ratio > 0.0 && labelled.size() < train.size()) {
        throw Error(ErrorKind::data, "missing_hf",
                    fmt::format("{} of {} training cases lack HF data", train.size() - labelled.size(), train.size()));
    }
    out.hf = draw_hf(train, hf_ratio, seed);
    out.train = std::move(train);
    out.test = std::move(test);
    return out;
}

MfDataset build_cases(const Dataset& data, double hf_ratio, std::uint64_t seed, double test_fraction) {
    check_ratio(hf_ratio, "hf_ratio");
    check_ratio(test_fraction, "test fraction");
    if (data.size() < 10) throw config_error(fmt::format("need at least 10 cases, got {}", data.size()));
    const std::vector<std::size_t> order = shuffled(data.size(), seed);
    const std::size_t n_test = round_count(test_fraction, data.size());
    std::vector<std::size_t> test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
    std::sort(test.begin(), test.end());
    std::sort(train.begin(), train.end());
    return split_with(data, std::move(train), std::move(test), hf_ratio, seed);
}

std::vector<double> lf_raw_input(const CaseRecord& c) {
    std::vector<double> x(c.features);
    x.push_back(c.U);
    x.push_back(c.aoa);
    return x;
}

RowMatrix lf_raw_inputs(const Dataset& data, std::span<const std::size_t> rows) {
    const std::size_t d = data.n_features() + 2;
    RowMatrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
    for (std::size_t t = 0; t < rows.size(); ++t) {
        const auto v = lf_raw_input(data.cases.at(rows[t]));
        if (v.size() != d) throw dimension_error("cases disagree in feature count");
        for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = v[j];
    }
    return x;
}

RowMatrix targets(const Dataset& data, std::span<const std::size_t> rows, bool use_hf) {
    RowMatrix y(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(data.n_stations()));
    for (std::size_t t = 0; t < rows.size(); ++t) {
        const CaseRecord& c = data.cases.at(rows[t]);
        const std::vector<double>& v = (use_hf && c.cp_hf) ? *c.cp_hf : c.cp_lf;
        for (std::size_t m = 0; m < v.size(); ++m) y(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(m)) = v[m];
    }
    return y;
}

std::vector<double> assemble_lf_input(std::span<const double> features, double U, double aoa, const NormStats& stats) {
    if (features.size() + 2 != stats.size()) {
        throw dimension_error(fmt::format("{} features + 2 scalars do not match {} normalization entries",
                                          features.size(), stats.size()));
    }
    std::vector<double> raw(features.begin(), features.end());
    raw.push_back(U);
    raw.push_back(aoa);
    std::vector<double> x(raw.size());
    stats.apply(raw, x);
    return x;
}

std::vector<double> assemble_delta_input(std::span<const double> x_lf, std::span<const double> lf_prediction) {
    if (lf_prediction.empty()) throw dimension_error("LF prediction is empty");
    std::vector<double> x(x_lf.begin(), x_lf.end());
    x.insert(x.end(), lf_prediction.begin(), lf_prediction.end());
    return x;
}

RowMatrix compute_residuals(const RowMatrix& y_hf, const RowMatrix& lf_pred) {
    if (y_hf.rows() != lf_pred.rows() || y_hf.cols() != lf_pred.cols()) {
        throw dimension_error(fmt::format("HF {}x{} vs LF prediction {}x{}", y_hf.rows(), y_hf.cols(), lf_pred.rows(),
                                          lf_pred.cols()));
    }
    return y_hf - lf_pred;
}

RowMatrix delta_inputs(const Model& lf, const RowMatrix& raw_lf_inputs) {
    const RowMatrix x = input_norm(lf).apply(raw_lf_inputs);
    return concat_cols(x, forward_batch(lf, x));
}

MfPrediction predict_mf(const MfSurrogate& s, const RowMatrix& raw_lf_inputs) {
    MfPrediction p;
    p.lf = predict_batch(s.lf, raw_lf_inputs);
    if (s.delta) {
        p.delta = predict_batch(*s.delta, delta_inputs(s.lf, raw_lf_inputs));
        if (p.delta.rows() != p.lf.rows() || p.delta.cols() != p.lf.cols()) {
            throw dimension_error("delta model output does not match the LF model");
        }
    } else {
        p.delta = RowMatrix::Zero(p.lf.rows(), p.lf.cols());
    }
    p.mf = p.lf + p.delta;
    return p;
}

ModelSpec default_lf_spec(Family f) {
    ModelSpec s;
    s.family = f;
    s.train.peak_lr = 3e-3;
    if (f == Family::khronos) {
        s.k = 3;
        s.r = 4;
        s.train.epochs = 1000;
    } else {
        s.hidden = {256, 256, 256, 256};
        s.train.epochs = 3500;
    }
    return s;
}

ModelSpec default_delta_spec(Family f) {
    ModelSpec s;
    s.family = f;
    s.train.peak_lr = 1e-3;
    if (f == Family::khronos) {
        s.k = 3;
        s.r = 6;
        s.train.epochs = 1500;
    } else {
        s.hidden = {128, 128, 128, 128};
        s.train.epochs = 4000;
    }
    return s;
}

Model make_model(const ModelSpec& spec, std::size_t d_in, std::size_t n_out, std::uint64_t seed) {
    if (spec.family == Family::khronos) {
        const khronos::KernelConfig config{d_in, spec.k, spec.r, n_out};
        return khronos::KhronosModel::create(config, seed, {spec.alpha_offset});
    }
    std::vector<std::size_t> widths{d_in};
    widths.insert(widths.end(), spec.hidden.begin(), spec.hidden.end());
    widths.push_back(n_out);
    return mlp::MlpModel::create(std::move(widths), seed);
}

training::TrainResult fit_model(Model& model, const RowMatrix& raw_inputs, const RowMatrix& raw_targets,
                                std::span<const double> weights, const training::TrainConfig& config,
                                const training::StopFn& stop) {
    const NormStats in = NormStats::fit(raw_inputs);
    const NormStats out = NormStats::fit(raw_targets);
    const SampleSet set{in.apply(raw_inputs), out.apply(raw_targets), {weights.begin(), weights.end()}};
    return std::visit(
        [&](auto& m) {
            m.input_norm = in;
            m.output_norm = out;
            return training::train(m, set, config, stop);
        },
        model);
}

PipelineResult train_pipeline(const Dataset& data, const MfDataset& split, const PipelineConfig& config,
                              std::uint64_t seed, const training::StopFn& stop) {
    data.validate();
    if (split.train.empty()) throw config_error("training split is empty");
    const std::size_t n_out = data.n_stations();

    std::vector<std::size_t> lf_rows = split.train;
    std::vector<double> weights(lf_rows.size(), 1.0);
    RowMatrix x_lf = lf_raw_inputs(data, lf_rows);
    RowMatrix y_lf = targets(data, lf_rows, false);
    if (config.mix_hf_into_lf && !split.hf.empty()) {
        x_lf = [&] {
            RowMatrix s(x_lf.rows() + static_cast<Eigen::Index>(split.hf.size()), x_lf.cols());
            s << x_lf, lf_raw_inputs(data, split.hf);
            return s;
        }();
        y_lf = [&] {
            RowMatrix s(y_lf.rows() + static_cast<Eigen::Index>(split.hf.size()), y_lf.cols());
            s << y_lf, targets(data, split.hf, true);
            return s;
        }();
        weights.insert(weights.end(), split.hf.size(), config.lf.train.w_hf);
    }

    PipelineResult result{{make_model(config.lf, data.n_features() + 2, n_out, seed), std::nullopt}, {}, std::nullopt};
    result.lf_history = fit_model(result.surrogate.lf, x_lf, y_lf, weights, config.lf.train, stop);

    if (config.use_delta && !split.hf.empty()) {
        auto [delta, history] = train_delta(data, split.hf, result.surrogate.lf, config.delta, seed + 1, stop);
        result.surrogate.delta = std::move(delta);
        result.delta_history = std::move(history);
    }
    return result;
}

std::pair<Model, training::TrainResult> train_delta(const Dataset& data, std::span<const std::size_t> hf_rows,
                                                    const Model& lf, const ModelSpec& spec, std::uint64_t seed,
                                                    const training::StopFn& stop) {
    if (hf_rows.empty()) throw config_error("delta training needs at least one HF case");
    const RowMatrix x_hf = lf_raw_inputs(data, hf_rows);
    const RowMatrix residual = compute_residuals(targets(data, hf_rows, true), predict_batch(lf, x_hf));
    const RowMatrix x_delta = delta_inputs(lf, x_hf);
    Model delta = make_model(spec, static_cast<std::size_t>(x_delta.cols()), data.n_stations(), seed);
    const std::vector<double> uniform(hf_rows.size(), 1.0);
    auto history = fit_model(delta, x_delta, residual, uniform, spec.train, stop);
    return {std::move(delta), std::move(history)};
}

BiasProfile parse_bias(std::string_view name) {
    if (name == "none") return BiasProfile::none;
    if (name == "offset") return BiasProfile::offset;
    if (name == "suction-damped") return BiasProfile::suction_damped;
    throw config_error(fmt::format("unknown bias profile '{}' (expected none, offset or suction-damped)", name));
}

std::string_view bias_name(BiasProfile b) {
    switch (b) {
        case BiasProfile::none: return "none";
        case BiasProfile::offset: return "offset";
        case BiasProfile::suction_damped: return "suction-damped";
    }
    return "none";
}

std::vector<double> synth_hf_cp(const geometry::AirfoilCurve& curve, double U, double aoa,
                                std::span<const Station> stations) {
    const auto [t, m] = shape_functionals(curve);
    const double alpha = aoa * std::numbers::pi / 180.0 + 1.3 * m;
    const double lift_scale = 0.5 * (1.0 + 0.08 * (U - 40.0) / 40.0);
    std::vector<double> cp(stations.size());
    for (std::size_t s = 0; s < stations.size(); ++s) {
        const double x = stations[s].x;
        const double sigma = stations[s].side == Side::upper ? 1.0 : -1.0;
        const double stagnation = std::sqrt(x / (x + 0.002));
        const double loading = std::sqrt((1.0 - x) / (x + 0.005));
        const double thickness = 3.0 * t * std::pow(x, 0.3) * std::pow(1.0 - x, 0.6);
        const double camber = 4.0 * m * std::sqrt(x * (1.0 - x));
        const double q = stagnation * (1.0 + thickness + sigma * (lift_scale * alpha * loading + camber));
        cp[s] = 1.0 - q * q;
    }
    return cp;
}

std::vector<double> apply_bias(std::span<const double> hf, std::span<const Station> stations,
                               const SynthOptions& options) {
    if (hf.size() != stations.size()) throw dimension_error("HF Cp and stations differ in length");
    std::vector<double> lf(hf.begin(), hf.end());
    switch (options.bias) {
        case BiasProfile::none: break;
        case BiasProfile::offset:
            for (double& v : lf) v += options.offset;
            break;
        case BiasProfile::suction_damped:
            for (std::size_t s = 0; s < lf.size(); ++s) {
                const double x = stations[s].x;
                if (stations[s].side != Side::upper || x >= 0.25) continue;
                const double c = std::cos(2.0 * std::numbers::pi * x);
                lf[s] = 1.0 - (1.0 - options.suction_damping * c * c) * (1.0 - hf[s]);
            }
            break;
    }
    return lf;
}

Dataset synth_benchmark(std::size_t n_cases, std::uint64_t seed, const SynthOptions& options) {
    if (n_cases < 1) throw config_error("synthetic benchmark needs at least one case");
    Dataset data;
    data.stations = cosine_stations(options.n_stations);
    data.layout = options.layout;
    data.bias_profile = std::string(bias_name(options.bias));
    data.seed = seed;

    const BasePolygon& base = base_polygon();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < n_cases; ++i) {
        const double tau = 0.6 + 0.9 * unit(rng);
        const double kappa = 0.05 * unit(rng);
        const double peak = 0.3 + 0.3 * unit(rng);
        double noise[2][2];
        for (auto& side : noise) {
            for (double& a : side) a = 0.002 * normal(rng);
        }
        const double U = 20.0 + 40.0 * unit(rng);
        const double aoa = -4.0 + 16.0 * unit(rng);

        auto perturb = [&](const std::vector<geometry::Point>& ctrl, int side) {
            std::vector<geometry::Point> out = ctrl;
            for (std::size_t k = 1; k + 1 < out.size(); ++k) {
                const double x = out[k].x;
                const double camber =
                    x < peak ? kappa / (peak * peak) * (2.0 * peak * x - x * x)
                             : kappa / ((1.0 - peak) * (1.0 - peak)) * (1.0 - 2.0 * peak + 2.0 * peak * x - x * x);
                const double bump = noise[side][0] * std::sin(std::numbers::pi * x) +
                                    noise[side][1] * std::sin(2.0 * std::numbers::pi * x);
                out[k].y = tau * ctrl[k].y + camber + bump;
            }
            return out;
        };
        const geometry::AirfoilCurve curve = geometry::make_curve(perturb(base.upper, 0), perturb(base.lower, 1));

        CaseRecord c;
        c.name = fmt::format("synth_{:04d}", i);
        c.features = geometry::geometry_features(curve, options.layout);
        c.U = U;
        c.aoa = aoa;
        auto hf = synth_hf_cp(curve, U, aoa, data.stations);
        c.cp_lf = apply_bias(hf, data.stations, options);
        c.cp_hf = std::move(hf);
        data.cases.push_back(std::move(c));
    }
    return data;
}

void write_dataset(const std::string& dir, const Dataset& data, double test_fraction) {
    data.validate();
    nlohmann::json j;
    j["format"] = "kmf-dataset";
    j["version"] = 1;
    j["n_cases"] = data.size();
    j["n_stations"] = data.n_stations();
    j["n_features"] = data.n_features();
    j["layout"] = geometry::layout_name(data.layout);
    j["bias_profile"] = data.bias_profile;
    j["seed"] = data.seed;
    auto st = nlohmann::json::array();
    for (const Station& s : data.stations) st.push_back({{"x", s.x}, {"side", s.side == Side::upper ? "upper" : "lower"}});
    j["stations"] = std::move(st);
    if (data.size() >= 10) {
        const MfDataset split = build_cases(data, 0.0, data.seed, test_fraction);
        j["split"] = {{"test_fraction", test_fraction}, {"seed", data.seed}, {"train", split.train},
                      {"test", split.test}};
        bool all_hf = std::all_of(data.cases.begin(), data.cases.end(), [](const CaseRecord& c) { return c.cp_hf.has_value(); });
        if (all_hf) {
            j["hf_indices"] = {{"0", draw_hf(split.train, 0.0, data.seed)},
                               {"0.1", draw_hf(split.train, 0.1, data.seed)},
                               {"0.3", draw_hf(split.train, 0.3, data.seed)}};
        }
    }
    auto cases = nlohmann::json::array();
    for (std::size_t i = 0; i < data.size(); ++i) {
        const CaseRecord& c = data.cases[i];
        cases.push_back({{"name", c.name},
                         {"file", case_file(i)},
                         {"U", c.U},
                         {"aoa", c.aoa},
                         {"has_hf", c.cp_hf.has_value()},
                         {"features", c.features}});
        std::string text = "station,Cp_LF,Cp_HF\n";
        for (std::size_t s = 0; s < data.n_stations(); ++s) {
            text += fmt::format("{},{},{}\n", s, c.cp_lf[s], c.cp_hf ? csv::format_double((*c.cp_hf)[s]) : "");
        }
        csv::write_file((std::filesystem::path(dir) / case_file(i)).string(), text);
    }
    j["cases"] = std::move(cases);
    csv::write_file((std::filesystem::path(dir) / "manifest.json").string(), j.dump(2) + "\n");
}

Dataset read_dataset(const std::string& dir) {
    const auto root = std::filesystem::path(dir);
    const std::string manifest_path = (root / "manifest.json").string();
    Dataset data;
    try {
        const auto j = nlohmann::json::parse(csv::read_file(manifest_path));
        if (j.at("format").get<std::string>() != "kmf-dataset") throw config_error("not a dataset manifest");
        data.layout = geometry::parse_layout(j.at("layout").get<std::string>());
        data.bias_profile = j.at("bias_profile").get<std::string>();
        data.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& s : j.at("stations")) {
            data.stations.push_back({s.at("x").get<double>(),
                                     s.at("side").get<std::string>() == "upper" ? Side::upper : Side::lower});
        }
        for (const auto& jc : j.at("cases")) {
            CaseRecord c;
            c.name = jc.at("name").get<std::string>();
            c.U = jc.at("U").get<double>();
            c.aoa = jc.at("aoa").get<double>();
            c.features = jc.at("features").get<std::vector<double>>();
            const std::string file = (root / jc.at("file").get<std::string>()).string();
            const csv::Table t = csv::read(file);
            const std::size_t clf = t.require("Cp_LF");
            const auto chf = t.column("Cp_HF");
            std::vector<double> hf;
            for (std::size_t r = 0; r < t.rows.size(); ++r) {
                c.cp_lf.push_back(t.number(r, clf));
                if (chf && !t.rows[r][*chf].empty()) hf.push_back(t.number(r, *chf));
            }
            if (!hf.empty()) {
                if (hf.size() != c.cp_lf.size()) throw ParseError(0, fmt::format("{}: incomplete Cp_HF column", file));
                c.cp_hf = std::move(hf);
            }
            data.cases.push_back(std::move(c));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, fmt::format("{}: {}", manifest_path, e.what()));
    }
    data.validate();
    return data;
}

}  // namespace kmf::mfpipe
