#include "kmf/evalharness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <random>

#include <fmt/format.h>
#include <json.hpp>

#include "kmf/error.hpp"

namespace kmf::eval {

namespace {

void check_pair(std::size_t a, std::size_t b) {
    if (a != b) throw dimension_error(fmt::format("truth has {} values, prediction {}", a, b));
    if (a < 2) throw dimension_error("at least two values are required");
}

std::span<const double> flat(const RowMatrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }

void check_shape(const RowMatrix& y, const RowMatrix& y_hat) {
    if (y.rows() != y_hat.rows() || y.cols() != y_hat.cols()) {
        throw dimension_error(
            fmt::format("truth is {}x{}, prediction {}x{}", y.rows(), y.cols(), y_hat.rows(), y_hat.cols()));
    }
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

double r_squared(std::span<const double> y, std::span<const double> y_hat) {
    check_pair(y.size(), y_hat.size());
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        ss_res += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
        ss_tot += (y[i] - mean) * (y[i] - mean);
    }
    if (!(ss_tot > 0.0)) throw Error(ErrorKind::data, "undefined_variance", "R^2 is undefined for a constant target");
    return 1.0 - ss_res / ss_tot;
}

double r_squared(const RowMatrix& y, const RowMatrix& y_hat) {
    check_shape(y, y_hat);
    return r_squared(flat(y), flat(y_hat));
}

std::vector<double> r_squared_per_case(const RowMatrix& y, const RowMatrix& y_hat) {
    check_shape(y, y_hat);
    std::vector<double> out(static_cast<std::size_t>(y.rows()));
    const auto n = static_cast<std::size_t>(y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
        out[static_cast<std::size_t>(r)] = r_squared(std::span<const double>(y.row(r).data(), n), std::span<const double>(y_hat.row(r).data(), n));
    }
    return out;
}

double nrmse(std::span<const double> y, std::span<const double> y_hat) {
    check_pair(y.size(), y_hat.size());
    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    const double range = *hi - *lo;
    if (!(range > 0.0)) throw Error(ErrorKind::data, "undefined_variance", "NRMSE is undefined for a constant target");
    double sq = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) sq += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
    return std::sqrt(sq / static_cast<double>(y.size())) / range;
}

double nrmse(const RowMatrix& y, const RowMatrix& y_hat) {
    check_shape(y, y_hat);
    return nrmse(flat(y), flat(y_hat));
}

std::vector<std::size_t> FoldPlan::train(std::size_t f) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < fold_of.size(); ++i) {
        if (fold_of[i] != f) rows.push_back(i);
    }
    return rows;
}

FoldPlan kfold_plan(std::size_t n_cases, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw config_error("k-fold needs at least 2 folds");
    if (n_cases < k) throw config_error(fmt::format("{} cases cannot fill {} folds", n_cases, k));
    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.permutation = all_rows(n_cases);
    std::mt19937_64 rng(seed);
    std::shuffle(plan.permutation.begin(), plan.permutation.end(), rng);
    plan.fold_of.assign(n_cases, 0);
    plan.folds.resize(k);
    const std::size_t base = n_cases / k, extra = n_cases % k;
    std::size_t pos = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t size = base + (f < extra ? 1 : 0);
        for (std::size_t t = 0; t < size; ++t, ++pos) {
            plan.fold_of[plan.permutation[pos]] = f;
            plan.folds[f].push_back(plan.permutation[pos]);
        }
        std::sort(plan.folds[f].begin(), plan.folds[f].end());
    }
    return plan;
}

R2Bins bin_r2(std::span<const double> scores, std::array<double, 3> edges) {
    R2Bins bins;
    for (double s : scores) {
        if (!std::isfinite(s)) throw domain_error("R^2 scores must be finite");
        std::size_t b = 0;
        while (b < 3 && s >= edges[b]) ++b;
        ++bins.counts[b];
    }
    if (!scores.empty()) {
        bins.fraction_above_first = 1.0 - static_cast<double>(bins.counts[0]) / static_cast<double>(scores.size());
    }
    return bins;
}

std::vector<ModelSummary> aggregate(std::span<const EvalRecord> records) {
    std::vector<ModelSummary> out;
    std::vector<std::vector<double>> case_scores;
    for (const EvalRecord& r : records) {
        auto it = std::find_if(out.begin(), out.end(), [&](const ModelSummary& s) { return s.model == r.model; });
        if (it == out.end()) {
            out.push_back({});
            out.back().model = r.model;
            case_scores.emplace_back();
            it = out.end() - 1;
        }
        ModelSummary& s = *it;
        ++s.folds;
        s.r2 += r.r2;
        s.r2_case_mean += r.r2_case_mean;
        s.nrmse += r.nrmse;
        s.params += static_cast<double>(r.params);
        s.train_seconds += r.train_seconds;
        s.infer_ms_per_sample += r.infer_ms_per_sample;
        auto& cs = case_scores[static_cast<std::size_t>(it - out.begin())];
        cs.insert(cs.end(), r.case_r2.begin(), r.case_r2.end());
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        ModelSummary& s = out[i];
        const auto n = static_cast<double>(s.folds);
        s.r2 /= n;
        s.r2_case_mean /= n;
        s.nrmse /= n;
        s.params /= n;
        s.train_seconds /= n;
        s.infer_ms_per_sample /= n;
        s.bins = bin_r2(case_scores[i]);
    }
    return out;
}

std::string records_csv(std::span<const EvalRecord> records) {
    std::string text =
        "model,fold,r2,r2_case_mean,nrmse,params,train_seconds,infer_ms_per_sample,config_digest\n";
    for (const EvalRecord& r : records) {
        text += fmt::format("{},{},{},{},{},{},{},{},{}\n", r.model, r.fold, r.r2, r.r2_case_mean, r.nrmse, r.params,
                            r.train_seconds, r.infer_ms_per_sample, r.config_digest);
    }
    return text;
}

std::string summary_json(std::span<const ModelSummary> summaries) {
    auto arr = nlohmann::json::array();
    for (const ModelSummary& s : summaries) {
        arr.push_back({{"model", s.model},
                       {"folds", s.folds},
                       {"r2", s.r2},
                       {"r2_case_mean", s.r2_case_mean},
                       {"nrmse", s.nrmse},
                       {"params", s.params},
                       {"train_seconds", s.train_seconds},
                       {"infer_ms_per_sample", s.infer_ms_per_sample},
                       {"r2_bins",
                        {{"edges", {0.7, 0.8, 0.9}},
                         {"counts", s.bins.counts},
                         {"fraction_above_0.7", s.bins.fraction_above_first}}}});
    }
    return nlohmann::json{{"models", arr}}.dump(2) + "\n";
}

double time_per_sample_ms(const std::function<void()>& pass, std::size_t n_samples, std::size_t repeats) {
    if (n_samples == 0 || repeats == 0) return 0.0;
    std::vector<double> ms;
    for (std::size_t r = 0; r < repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        pass();
        ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    std::nth_element(ms.begin(), ms.begin() + static_cast<std::ptrdiff_t>(ms.size() / 2), ms.end());
    return ms[ms.size() / 2] / static_cast<double>(n_samples);
}

std::string config_digest(const std::string& text) {
    // FNV-1a, so digests agree across standard libraries.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return fmt::format("{:016x}", h);
}

std::vector<EvalRecord> score_surrogate(const mfpipe::Dataset& data, const mfpipe::MfSurrogate& s,
                                        std::span<const std::size_t> rows, const std::string& prefix,
                                        std::size_t fold) {
    const RowMatrix x = mfpipe::lf_raw_inputs(data, rows);
    const RowMatrix truth = mfpipe::targets(data, rows, true);
    const mfpipe::MfPrediction pred = mfpipe::predict_mf(s, x);

    auto record = [&](const std::string& name, const RowMatrix& y_hat, std::size_t params,
                      const std::function<void()>& pass) {
        EvalRecord r;
        r.model = prefix + name;
        r.fold = fold;
        r.r2 = r_squared(truth, y_hat);
        r.case_r2 = r_squared_per_case(truth, y_hat);
        r.r2_case_mean = mean_of(r.case_r2);
        r.nrmse = nrmse(truth, y_hat);
        r.params = params;
        r.infer_ms_per_sample = time_per_sample_ms(pass, rows.size());
        return r;
    };
    std::vector<EvalRecord> out;
    out.push_back(record("lf", pred.lf, parameter_count(s.lf), [&] { (void)predict_batch(s.lf, x); }));
    if (s.delta) {
        out.push_back(record("mf", pred.mf, parameter_count(s.lf) + parameter_count(*s.delta),
                             [&] { (void)mfpipe::predict_mf(s, x); }));
    }
    return out;
}

std::vector<EvalRecord> kfold_evaluate(const mfpipe::Dataset& data, const FoldPlan& plan,
                                       const mfpipe::PipelineConfig& config, double hf_ratio, std::uint64_t seed,
                                       int jobs) {
    if (plan.fold_of.size() != data.size()) throw dimension_error("fold plan does not match the dataset");
    const std::string prefix = fmt::format("{}-", family_name(config.lf.family));
    const std::string digest = config_digest(fmt::format(
        "lf={}:{}:{}:{}:{} delta={}:{}:{}:{}:{} hf={} seed={}", family_name(config.lf.family), config.lf.k,
        config.lf.r, config.lf.train.peak_lr, config.lf.train.epochs, family_name(config.delta.family),
        config.delta.k, config.delta.r, config.delta.train.peak_lr, config.delta.train.epochs, hf_ratio, seed));

    std::vector<std::vector<EvalRecord>> per_fold(plan.k);
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic) num_threads(std::max(jobs, 1))
    for (std::ptrdiff_t f = 0; f < static_cast<std::ptrdiff_t>(plan.k); ++f) {
        const auto uf = static_cast<std::size_t>(f);
        try {
            const mfpipe::MfDataset split = mfpipe::split_with(data, plan.train(uf), plan.test(uf), hf_ratio, seed);
            const mfpipe::PipelineResult trained = mfpipe::train_pipeline(data, split, config, seed);
            auto records = score_surrogate(data, trained.surrogate, split.test, prefix, uf);
            for (EvalRecord& r : records) {
                r.train_seconds = trained.lf_history.seconds;
                if (r.model == prefix + "mf" && trained.delta_history) r.train_seconds += trained.delta_history->seconds;
                r.config_digest = digest;
            }
            per_fold[uf] = std::move(records);
        } catch (...) {
#pragma omp critical(kmf_kfold_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    std::vector<EvalRecord> out;
    for (auto& v : per_fold) out.insert(out.end(), v.begin(), v.end());
    return out;
}

RegressionTask lf_task(const mfpipe::Dataset& data, const mfpipe::MfDataset& split, bool test_on_hf) {
    return {mfpipe::lf_raw_inputs(data, split.train), mfpipe::targets(data, split.train, false),
            mfpipe::lf_raw_inputs(data, split.test), mfpipe::targets(data, split.test, test_on_hf)};
}

Clock steady_clock() {
    return [] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
    };
}

std::vector<BudgetPoint> budget_run(const ModelFactory& factory, const RegressionTask& task,
                                    std::span<const double> budgets, const training::TrainConfig& config,
                                    std::uint64_t seed, const Clock& clock) {
    if (budgets.empty()) throw config_error("budget list is empty");
    for (std::size_t b = 0; b < budgets.size(); ++b) {
        if (!(budgets[b] > 0.0)) throw config_error("budgets must be positive");
        if (b > 0 && !(budgets[b] > budgets[b - 1])) throw config_error("budgets must be strictly ascending");
    }
    const std::vector<double> weights(static_cast<std::size_t>(task.x_train.rows()), 1.0);
    std::vector<BudgetPoint> curve;
    for (double budget : budgets) {
        Model model = factory(seed);
        const double start = clock();
        double elapsed = 0.0;
        const training::StopFn stop = [&](std::size_t) {
            elapsed = clock() - start;
            return elapsed >= budget;
        };
        const training::TrainResult res = mfpipe::fit_model(model, task.x_train, task.y_train, weights, config, stop);
        BudgetPoint p;
        p.budget = budget;
        p.elapsed = elapsed;
        p.steps = res.steps;
        p.single_step = res.steps <= 1 && elapsed >= budget;
        p.error = 1.0 - r_squared(task.y_test, predict_batch(model, task.x_test));
        curve.push_back(p);
    }
    return curve;
}

std::vector<SweepPoint> param_sweep_run(const std::function<Model(double knob, std::uint64_t seed)>& factory,
                                        std::span<const double> knobs, const RegressionTask& task,
                                        const training::TrainConfig& config, std::uint64_t seed) {
    if (knobs.empty()) throw config_error("knob list is empty");
    const std::vector<double> weights(static_cast<std::size_t>(task.x_train.rows()), 1.0);
    std::vector<SweepPoint> curve;
    for (double knob : knobs) {
        Model model = factory(knob, seed);
        SweepPoint p;
        p.knob = knob;
        p.params = parameter_count(model);
        const training::TrainResult res = mfpipe::fit_model(model, task.x_train, task.y_train, weights, config);
        const RowMatrix pred = predict_batch(model, task.x_test);
        p.error = 1.0 - r_squared(task.y_test, pred);
        p.nrmse = nrmse(task.y_test, pred);
        p.train_seconds = res.seconds;
        curve.push_back(p);
    }
    return curve;
}

}  // namespace kmf::eval
