#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kmf/fields.hpp"
#include "kmf/geometry.hpp"
#include "kmf/model.hpp"
#include "kmf/normalization.hpp"
#include "kmf/training.hpp"

namespace kmf::mfpipe {

using fields::Side;
using fields::Station;

inline constexpr std::size_t kStations = 81;

/// n (odd, >= 3) cosine-clustered stations around the airfoil: theta = 2 pi s / (n - 1),
/// x = (1 + cos theta) / 2. Upper side from the trailing edge to the leading edge
/// (s <= (n-1)/2, leading edge included), then lower side back to the trailing edge.
std::vector<Station> cosine_stations(std::size_t n = kStations);

/// One case: raw geometry features, operating point and Cp at the shared stations.
struct CaseRecord {
    std::string name;
    std::vector<double> features;
    double U = 0.0;
    double aoa = 0.0;
    std::vector<double> cp_lf;
    std::optional<std::vector<double>> cp_hf;
};

/// Paired LF/HF cases on a common station grid.
struct Dataset {
    std::vector<CaseRecord> cases;
    std::vector<Station> stations;
    geometry::FeatureLayout layout = geometry::FeatureLayout::y_only;
    std::string bias_profile = "none";
    std::uint64_t seed = 0;

    std::size_t size() const noexcept { return cases.size(); }
    std::size_t n_stations() const noexcept { return stations.size(); }
    std::size_t n_features() const { return cases.empty() ? 0 : cases.front().features.size(); }
    /// Throws when cases disagree in feature or station counts.
    void validate() const;
};

/// Train/test split with the HF-labelled subset of train.
struct MfDataset {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    std::vector<std::size_t> hf;
    double hf_ratio = 0.0;
    std::uint64_t seed = 0;
};

/// Training cases: 1 -> 0, 2 -> 0.1, 3 -> 0.3.
double case_hf_ratio(int case_id);

/// round(ratio * |train|) indices from a seeded shuffle of train (sorted ascending).
std::vector<std::size_t> draw_hf(std::span<const std::size_t> train, double hf_ratio, std::uint64_t seed);

/// Test split: round(test_fraction * n) cases from a seeded shuffle, independent of hf_ratio.
/// HF subset: draw_hf on the train split. Requires n >= 10.
MfDataset build_cases(const Dataset& data, double hf_ratio, std::uint64_t seed, double test_fraction = 0.2);

/// Same HF draw over an externally fixed train/test split (used by k-fold evaluation).
MfDataset split_with(const Dataset& data, std::vector<std::size_t> train, std::vector<std::size_t> test,
                     double hf_ratio, std::uint64_t seed);

/// [features, U, aoa].
std::vector<double> lf_raw_input(const CaseRecord& c);
RowMatrix lf_raw_inputs(const Dataset& data, std::span<const std::size_t> rows);

/// stats.apply([features, U, aoa]); length must equal stats.size().
std::vector<double> assemble_lf_input(std::span<const double> features, double U, double aoa, const NormStats& stats);

/// [x_lf, lf_prediction]; lf_prediction must be non-empty.
std::vector<double> assemble_delta_input(std::span<const double> x_lf, std::span<const double> lf_prediction);

/// y_hf - lf_pred elementwise.
RowMatrix compute_residuals(const RowMatrix& y_hf, const RowMatrix& lf_pred);

struct MfSurrogate {
    Model lf;
    std::optional<Model> delta;
};

struct MfPrediction {
    RowMatrix lf;     ///< LF model output (physical Cp)
    RowMatrix delta;  ///< delta model output (physical residual), zeros without a delta model
    RowMatrix mf;     ///< lf + delta
};

/// Raw LF inputs -> composed prediction.
MfPrediction predict_mf(const MfSurrogate& s, const RowMatrix& raw_lf_inputs);

/// Delta-model inputs for raw LF inputs: [normalized x_LF, normalized LF prediction].
RowMatrix delta_inputs(const Model& lf, const RowMatrix& raw_lf_inputs);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct ModelSpec {
    Family family = Family::khronos;
    std::size_t k = 3;
    std::size_t r = 4;
    double alpha_offset = 1.0;
    std::vector<std::size_t> hidden{256, 256, 256, 256};
    training::TrainConfig train;
};

/// Defaults: KHRONOS LF k=3 r=4 lr 3e-3 1000 epochs, delta k=3 r=6 lr 1e-3 1500 epochs;
/// MLP LF 256x4 lr 3e-3 3500 epochs, delta 128x4 lr 1e-3 4000 epochs.
ModelSpec default_lf_spec(Family f);
ModelSpec default_delta_spec(Family f);

/// Untrained model for the given dimensions with identity normalization.
Model make_model(const ModelSpec& spec, std::size_t d_in, std::size_t n_out, std::uint64_t seed);

/// Fits normalization on the rows, trains, and returns the history.
training::TrainResult fit_model(Model& model, const RowMatrix& raw_inputs, const RowMatrix& raw_targets,
                                std::span<const double> weights, const training::TrainConfig& config,
                                const training::StopFn& stop = {});

struct PipelineConfig {
    ModelSpec lf = default_lf_spec(Family::khronos);
    ModelSpec delta = default_delta_spec(Family::khronos);
    /// Adds HF-labelled train cases to the LF set with weight lf.train.w_hf.
    bool mix_hf_into_lf = false;
    /// Train a delta model when HF cases exist (case 1 never has one).
    bool use_delta = true;
};

struct PipelineResult {
    MfSurrogate surrogate;
    training::TrainResult lf_history;
    std::optional<training::TrainResult> delta_history;
};

PipelineResult train_pipeline(const Dataset& data, const MfDataset& split, const PipelineConfig& config,
                              std::uint64_t seed, const training::StopFn& stop = {});

/// Second stage alone: residuals y_HF - lf(x) on hf_rows, then a fresh delta model fitted to them.
std::pair<Model, training::TrainResult> train_delta(const Dataset& data, std::span<const std::size_t> hf_rows,
                                                    const Model& lf, const ModelSpec& spec, std::uint64_t seed,
                                                    const training::StopFn& stop = {});

/// Rows as a matrix of Cp (HF when present and use_hf, else LF).
RowMatrix targets(const Dataset& data, std::span<const std::size_t> rows, bool use_hf);

// ---------------------------------------------------------------------------
// Synthetic benchmark
// ---------------------------------------------------------------------------

enum class BiasProfile { none, offset, suction_damped };

BiasProfile parse_bias(std::string_view name);
std::string_view bias_name(BiasProfile b);

struct SynthOptions {
    std::size_t n_stations = kStations;
    BiasProfile bias = BiasProfile::none;
    geometry::FeatureLayout layout = geometry::FeatureLayout::y_only;
    double offset = 0.2;
    /// Fractional damping of (1 - Cp) at the upper leading edge for suction_damped.
    double suction_damping = 0.35;
};

/// Smooth perturbations of a fitted NACA 0012 control polygon (thickness scale, camber,
/// low-order noise), U in [20, 60] m/s, AoA in [-4, 12] deg, analytic HF Cp with a leading-edge
/// suction peak, LF = HF + bias. Every case carries HF.
Dataset synth_benchmark(std::size_t n_cases, std::uint64_t seed, const SynthOptions& options = {});

/// Analytic HF Cp at the stations for a fitted curve and operating point.
std::vector<double> synth_hf_cp(const geometry::AirfoilCurve& curve, double U, double aoa,
                                std::span<const Station> stations);

/// Applies a bias profile to an HF Cp vector.
std::vector<double> apply_bias(std::span<const double> hf, std::span<const Station> stations,
                               const SynthOptions& options);

// ---------------------------------------------------------------------------
// Dataset directory: manifest.json + case_XXXX.csv (station, Cp_LF, Cp_HF)
// ---------------------------------------------------------------------------

void write_dataset(const std::string& dir, const Dataset& data, double test_fraction = 0.2);
Dataset read_dataset(const std::string& dir);

}  // namespace kmf::mfpipe
