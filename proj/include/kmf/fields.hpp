#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kmf/geometry.hpp"

namespace kmf::fields {

using geometry::Point;
using geometry::Side;

inline constexpr double kRho = 1.225;        // kg/m^3
inline constexpr double kPInf = 101325.0;    // Pa
inline constexpr double kMu = 1.81e-5;       // Pa s

/// One airfoil flow case. Internal field arrays are optional (empty) but, when present,
/// share the length of `internal`.
struct AirfoilCase {
    std::string name;
    std::vector<Point> surface;
    std::vector<double> surface_pbar;  ///< reduced pressure on the surface (m^2/s^2)
    std::vector<double> surface_p;     ///< dimensional surface pressure (Pa) when given
    std::vector<double> surface_cp;    ///< Cp on the surface when given directly

    std::vector<Point> internal;
    std::vector<double> internal_pbar;
    std::vector<double> internal_u;
    std::vector<double> internal_v;

    double U = 0.0;    ///< freestream speed (m/s)
    double aoa = 0.0;  ///< degrees
    double rho = kRho;
    double p_inf = kPInf;
    double mu = kMu;

    /// x_max - x_min over the surface.
    double chord() const;
    void validate() const;
};

struct BandOptions {
    double margin_fraction = 0.5;
    double outlier_quantile = 0.99;
    std::size_t min_points = 100;
};

struct FreestreamState {
    double pbar_inf = 0.0;
    double u_inf = 0.0;
    std::vector<std::size_t> band;
};

/// Linear-interpolated sample quantile (q in [0, 1]) of unsorted values.
double quantile(std::vector<double> values, double q);

/// Indices of internal points in the far-field band: radius from the surface bounding-box
/// centre at least (max surface radius + margin * chord), then at most the outlier quantile of
/// those candidate radii. Ascending order. Throws "insufficient_farfield" below min_points.
std::vector<std::size_t> farfield_band(const AirfoilCase& c, const BandOptions& options = {});

/// Means of reduced pressure and speed over the band.
FreestreamState freestream_state(const AirfoilCase& c, std::span<const std::size_t> band);

/// p = P_inf + rho (pbar - pbar_inf).
std::vector<double> reconstruct_pressure(std::span<const double> pbar, const FreestreamState& fs, double rho = kRho,
                                         double p_inf = kPInf);

/// Cp = (p - P_inf) / (rho U_inf^2 / 2). Throws a domain error when U_inf is not positive.
std::vector<double> cp_from_pressure(std::span<const double> p, const FreestreamState& fs, double rho = kRho,
                                     double p_inf = kPInf);

/// Inverse of cp_from_pressure.
std::vector<double> pressure_from_cp(std::span<const double> cp, const FreestreamState& fs, double rho = kRho,
                                     double p_inf = kPInf);

/// Cp = 1 - ratio^2.
std::vector<double> cp_from_edge_velocity(std::span<const double> ratio);

double reynolds(double rho, double U, double chord, double mu = kMu);
double reynolds(const AirfoilCase& c);

/// Piecewise-linear interpolation on strictly increasing sources, clamped beyond the ends.
std::vector<double> interpolate_linear(std::span<const double> xs, std::span<const double> ys,
                                       std::span<const double> targets);

struct Station {
    double x = 0.0;
    Side side = Side::upper;

    bool operator==(const Station&) const = default;
};

/// Splits surface samples by the sign of y (y >= 0 upper), sorts each side by x and
/// interpolates Cp at each station on its own side.
std::vector<double> interpolate_to_stations(std::span<const Point> surface, std::span<const double> cp,
                                            std::span<const Station> stations);

/// Surface Cp, preferring (in order) reduced pressure with an internal field (band ->
/// freestream state -> pressure -> Cp), a Cp column, then dimensional pressure referenced to U.
struct ProcessedCase {
    std::string name;
    double U = 0.0;
    double aoa = 0.0;
    double chord = 0.0;
    double reynolds = 0.0;
    FreestreamState freestream;
    std::vector<double> surface_cp;
    std::vector<double> station_cp;
};

ProcessedCase process_case(const AirfoilCase& c, std::span<const Station> stations, const BandOptions& options = {});

std::string processed_case_json(const ProcessedCase& pc, std::span<const Station> stations);

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

struct CaseMeta {
    double U = 0.0;
    double aoa = 0.0;
};

/// U and AoA are the first two numeric tokens of the file stem split on '_', e.g.
/// "airFoil2D_SST_43.597_5.932_3.551_3.1_1.0_18.252" -> U = 43.597, AoA = 5.932.
CaseMeta parse_case_filename(const std::string& path);

/// CSV with columns file, U, aoa; keys are file stems.
std::map<std::string, CaseMeta> read_meta_csv(const std::string& path);

/// Resolves metadata from the override map (by stem) or else the filename.
CaseMeta case_meta(const std::string& path, const std::map<std::string, CaseMeta>* overrides);

/// Surface CSV with columns x, y and at least one of pbar, p (Pa) or Cp.
AirfoilCase read_surface_case(const std::string& path, const CaseMeta& meta);

/// Internal field CSV with columns x, y, pbar, u, v, appended to the case.
void read_internal_field(const std::string& path, AirfoilCase& c);

}  // namespace kmf::fields
