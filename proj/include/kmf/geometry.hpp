#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kmf/splines.hpp"

namespace kmf::geometry {

struct Point {
    double x = 0.0;
    double y = 0.0;

    bool operator==(const Point&) const = default;
};

/// Single parametric B-spline X(zeta) = sum_i d_i N_i(zeta), zeta in [0, 1].
struct BSplineCurve {
    splines::ClampedBasis basis;
    std::vector<Point> control;

    Point eval(double zeta) const;
};

/// Upper and lower cubic B-splines, each running leading edge -> trailing edge.
/// control[0] is the shared leading-edge point and control.back() the shared trailing-edge
/// point; control[1] on both sides sits at the leading-edge x-coordinate.
struct AirfoilCurve {
    BSplineCurve upper;
    BSplineCurve lower;

    /// Total distinct control points: 2 * per_side - 2.
    std::size_t n_ctrl() const noexcept { return 2 * upper.control.size() - 2; }
    Point leading_edge() const { return upper.control.front(); }
    Point trailing_edge() const { return upper.control.back(); }
    /// Distance between the leading- and trailing-edge control points.
    double chord() const;
};

enum class Side { upper, lower };

/// Surface samples split per side, each ordered leading edge -> trailing edge.
struct SurfacePoints {
    std::vector<Point> upper;
    std::vector<Point> lower;
};

struct FitReport {
    double rmse = 0.0;
    /// Euclidean distance per sample, upper samples first, then lower.
    std::vector<double> residuals;
    std::vector<double> zeta_upper;
    std::vector<double> zeta_lower;
    /// Spectral condition number of the larger normal-equation matrix.
    double condition = 0.0;
};

struct FitResult {
    AirfoilCurve curve;
    FitReport report;
};

struct FitOptions {
    /// Distinct control points; must be even and >= 6 (cubic, shared ends).
    std::size_t n_ctrl = 16;
    /// Fix the two leading-edge neighbours to the leading-edge x-coordinate. Without it only the
    /// shared end points constrain the fit.
    bool pin_leading_edge_x = true;
    /// Condition numbers above this raise IllConditionedFit.
    double max_condition = 1e12;
    /// Parameter values to use instead of chord-length parameterization.
    std::optional<std::vector<double>> zeta_upper;
    std::optional<std::vector<double>> zeta_lower;
};

/// Chord-length parameterization: zeta_0 = 0, zeta_N-1 = 1, proportional to cumulative
/// polyline length. Repeated consecutive points receive equal zeta.
std::vector<double> parameterize_points(std::span<const Point> points);

/// Splits an ordered closed-loop point list (trailing edge -> leading edge -> trailing edge,
/// either direction) at the minimum-x point. Both halves include the leading-edge point.
SurfacePoints split_loop(std::span<const Point> points);

/// Splits by the sign of y (y >= 0 is upper) and sorts each side by x.
SurfacePoints split_by_sign(std::span<const Point> points);

/// Least-squares fit of both surfaces with a shared leading-edge point, shared trailing-edge
/// point and the two leading-edge neighbours pinned to the leading-edge x-coordinate.
/// Each side may be given in either direction; it is oriented by its minimum-x end.
FitResult fit_bspline_lsq(const SurfacePoints& surface, const FitOptions& options = {});

/// Evaluates one side at the given parameters.
std::vector<Point> reconstruct_curve(const AirfoilCurve& curve, Side side, std::span<const double> zeta);

/// Builds a curve from per-side control polygons with clamped uniform cubic knots.
AirfoilCurve make_curve(std::vector<Point> upper_ctrl, std::vector<Point> lower_ctrl);

enum class FeatureLayout { xy_flat, y_only };

FeatureLayout parse_layout(std::string_view name);
std::string_view layout_name(FeatureLayout layout);

/// Number of features for n_ctrl distinct control points.
std::size_t feature_count(std::size_t n_ctrl, FeatureLayout layout);

/// Control points translated to the leading edge and divided by the chord, in the order
/// leading edge, trailing edge, upper 1 .. n-2, lower 1 .. n-2. xy_flat interleaves (x, y).
std::vector<double> geometry_features(const AirfoilCurve& curve, FeatureLayout layout = FeatureLayout::xy_flat);

/// Closed-form NACA 4-digit section with unit chord, cosine-spaced stations.
/// Both sides run leading edge -> trailing edge and share the leading-edge point.
SurfacePoints naca4(std::string_view digits, std::size_t points_per_side = 201, bool closed_te = false);

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

/// Surface CSV with header. Required columns x, y; optional side (upper/lower) and zeta.
struct SurfaceTable {
    std::vector<Point> points;
    std::vector<Side> sides;     // empty when the column is absent
    std::vector<double> zeta;    // empty when the column is absent
};

SurfaceTable read_surface_csv(const std::string& path);

/// Splits a table into sides: by the side column when present, else as an ordered loop
/// (split_by_sign when by_sign is set). Fills zeta overrides when a zeta column is present, and
/// with options rejects tables holding fewer points than options->n_ctrl.
SurfacePoints surface_from_table(const SurfaceTable& table, bool by_sign, FitOptions* options = nullptr);

/// Writes x, y, side, zeta rows for both sides sampled at the given parameters.
void write_surface_csv(const std::string& path, const AirfoilCurve& curve, std::span<const double> zeta_upper,
                       std::span<const double> zeta_lower);

std::string curve_to_json(const AirfoilCurve& curve);
AirfoilCurve curve_from_json(const std::string& text);

/// side, index, zeta, residual rows.
void write_fit_report_csv(const std::string& path, const FitReport& report);

}  // namespace kmf::geometry
