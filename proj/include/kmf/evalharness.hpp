#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "kmf/mfpipe.hpp"
#include "kmf/model.hpp"
#include "kmf/training.hpp"
#include "kmf/types.hpp"

namespace kmf::eval {

/// 1 - SS_res / SS_tot. Throws "undefined_variance" when y is constant, a dimension error
/// for mismatched or too-short (< 2) inputs.
double r_squared(std::span<const double> y, std::span<const double> y_hat);
/// Pooled over every (row, column) entry.
double r_squared(const RowMatrix& y, const RowMatrix& y_hat);
/// One score per row.
std::vector<double> r_squared_per_case(const RowMatrix& y, const RowMatrix& y_hat);

/// RMSE / (max y - min y). Throws when the range is zero.
double nrmse(std::span<const double> y, std::span<const double> y_hat);
double nrmse(const RowMatrix& y, const RowMatrix& y_hat);

struct FoldPlan {
    std::size_t k = 5;
    std::uint64_t seed = 0;
    std::vector<std::size_t> permutation;
    std::vector<std::size_t> fold_of;              ///< fold id per case
    std::vector<std::vector<std::size_t>> folds;  ///< sorted test indices per fold

    std::vector<std::size_t> test(std::size_t f) const { return folds.at(f); }
    std::vector<std::size_t> train(std::size_t f) const;
};

/// Seeded shuffle, then K contiguous chunks; the first n % K folds hold one extra case.
FoldPlan kfold_plan(std::size_t n_cases, std::size_t k = 5, std::uint64_t seed = 0);

struct R2Bins {
    std::array<std::size_t, 4> counts{};  ///< (<e0), [e0,e1), [e1,e2), >= e2
    double fraction_above_first = 0.0;    ///< 1 - counts[0] / n
    std::size_t total() const { return counts[0] + counts[1] + counts[2] + counts[3]; }
};

R2Bins bin_r2(std::span<const double> scores, std::array<double, 3> edges = {0.7, 0.8, 0.9});

struct EvalRecord {
    std::string model;
    std::size_t fold = 0;
    double r2 = 0.0;           ///< pooled over the fold's test cases
    double r2_case_mean = 0.0; ///< mean of per-case scores
    double nrmse = 0.0;
    std::size_t params = 0;
    double train_seconds = 0.0;
    double infer_ms_per_sample = 0.0;
    std::string config_digest;
    std::vector<double> case_r2;
};

struct ModelSummary {
    std::string model;
    std::size_t folds = 0;
    double r2 = 0.0;
    double r2_case_mean = 0.0;
    double nrmse = 0.0;
    double params = 0.0;
    double train_seconds = 0.0;
    double infer_ms_per_sample = 0.0;
    R2Bins bins;
};

/// Means across folds per model id, in first-appearance order.
std::vector<ModelSummary> aggregate(std::span<const EvalRecord> records);

std::string records_csv(std::span<const EvalRecord> records);
std::string summary_json(std::span<const ModelSummary> summaries);

/// Median over `repeats` timed calls, divided by n_samples, in milliseconds.
double time_per_sample_ms(const std::function<void()>& pass, std::size_t n_samples, std::size_t repeats = 5);

/// Stable digest of a configuration description.
std::string config_digest(const std::string& text);

/// K-fold protocol: per fold, split_with(train, test, hf_ratio), train_pipeline, and score the
/// LF prediction and (when a delta model exists) the MF prediction against HF test Cp (LF Cp when
/// HF is absent). Folds run on up to `jobs` threads; records come back in fold order.
std::vector<EvalRecord> kfold_evaluate(const mfpipe::Dataset& data, const FoldPlan& plan,
                                       const mfpipe::PipelineConfig& config, double hf_ratio, std::uint64_t seed,
                                       int jobs = 1);

/// Scores a trained surrogate on rows; emits "<prefix>lf" and, with a delta model, "<prefix>mf".
std::vector<EvalRecord> score_surrogate(const mfpipe::Dataset& data, const mfpipe::MfSurrogate& s,
                                        std::span<const std::size_t> rows, const std::string& prefix,
                                        std::size_t fold);

// ---------------------------------------------------------------------------
// Budget experiments
// ---------------------------------------------------------------------------

/// Fixed train/test matrices in raw units.
struct RegressionTask {
    RowMatrix x_train;
    RowMatrix y_train;
    RowMatrix x_test;
    RowMatrix y_test;
};

/// LF-only task: train on LF Cp of the train split; test against HF Cp (LF where absent), or
/// against LF Cp when test_on_hf is false.
RegressionTask lf_task(const mfpipe::Dataset& data, const mfpipe::MfDataset& split, bool test_on_hf = true);

/// Monotonic seconds.
using Clock = std::function<double()>;
Clock steady_clock();

using ModelFactory = std::function<Model(std::uint64_t seed)>;

struct BudgetPoint {
    double budget = 0.0;
    double elapsed = 0.0;
    std::size_t steps = 0;
    double error = 0.0;  ///< 1 - pooled R^2 on the test rows
    /// The budget expired before the first optimizer step finished.
    bool single_step = false;
};

/// For each budget: a fresh model from the factory, trained until clock() - start >= budget
/// (or config.epochs run out), scored on the test rows. Budgets must be positive and ascending.
std::vector<BudgetPoint> budget_run(const ModelFactory& factory, const RegressionTask& task,
                                    std::span<const double> budgets, const training::TrainConfig& config,
                                    std::uint64_t seed, const Clock& clock = steady_clock());

struct SweepPoint {
    double knob = 0.0;
    std::size_t params = 0;
    double error = 0.0;
    double nrmse = 0.0;
    double train_seconds = 0.0;
};

/// Trains one fresh model per knob value with the same protocol; params are counted from the
/// instantiated model.
std::vector<SweepPoint> param_sweep_run(const std::function<Model(double knob, std::uint64_t seed)>& factory,
                                        std::span<const double> knobs, const RegressionTask& task,
                                        const training::TrainConfig& config, std::uint64_t seed);

}  // namespace kmf::eval
