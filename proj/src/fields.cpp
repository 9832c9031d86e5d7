#include "kmf/fields.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include <fmt/format.h>
#include <json.hpp>

#include "kmf/csv.hpp"
#include "kmf/error.hpp"

namespace kmf::fields {

namespace {

void require_same(std::size_t a, std::size_t b, const char* what) {
    if (a != b) throw dimension_error(fmt::format("{}: {} values for {} points", what, b, a));
}

double q_inf(const FreestreamState& fs, double rho) {
    if (!(fs.u_inf > 0.0)) throw domain_error("freestream speed must be positive to form a dynamic pressure");
    return 0.5 * rho * fs.u_inf * fs.u_inf;
}

struct SortedSide {
    std::vector<double> x;
    std::vector<double> cp;
};

SortedSide sorted_side(std::vector<std::pair<double, double>> samples, const char* name) {
    std::stable_sort(samples.begin(), samples.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    SortedSide s;
    for (const auto& [x, cp] : samples) {
        if (!s.x.empty() && !(x > s.x.back())) {
            throw Error(ErrorKind::data, "interpolation",
                        fmt::format("{} surface has repeated station x = {}", name, x));
        }
        s.x.push_back(x);
        s.cp.push_back(cp);
    }
    return s;
}

}  // namespace

double AirfoilCase::chord() const {
    if (surface.empty()) return 0.0;
    const auto [lo, hi] =
        std::minmax_element(surface.begin(), surface.end(), [](Point a, Point b) { return a.x < b.x; });
    return hi->x - lo->x;
}

void AirfoilCase::validate() const {
    if (!(chord() > 0.0)) throw Error(ErrorKind::data, "degenerate_geometry", "case chord must be positive");
    if (!(U > 0.0)) throw config_error(fmt::format("case '{}': freestream speed must be positive", name));
    if (!surface_pbar.empty()) require_same(surface.size(), surface_pbar.size(), "surface pbar");
    if (!surface_p.empty()) require_same(surface.size(), surface_p.size(), "surface p");
    if (!surface_cp.empty()) require_same(surface.size(), surface_cp.size(), "surface Cp");
    if (!internal.empty()) {
        require_same(internal.size(), internal_pbar.size(), "internal pbar");
        require_same(internal.size(), internal_u.size(), "internal u");
        require_same(internal.size(), internal_v.size(), "internal v");
    }
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw config_error("quantile of an empty sample");
    if (!(q >= 0.0 && q <= 1.0)) throw config_error("quantile level must be in [0, 1]");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<std::size_t> farfield_band(const AirfoilCase& c, const BandOptions& options) {
    if (c.internal.empty()) throw Error(ErrorKind::data, "insufficient_farfield", "case has no internal field points");
    if (c.surface.empty()) throw Error(ErrorKind::data, "degenerate_geometry", "case has no surface points");
    double xmin = c.surface[0].x, xmax = xmin, ymin = c.surface[0].y, ymax = ymin;
    for (const Point& p : c.surface) {
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
    }
    const double cx = 0.5 * (xmin + xmax);
    const double cy = 0.5 * (ymin + ymax);
    double r_surface = 0.0;
    for (const Point& p : c.surface) r_surface = std::max(r_surface, std::hypot(p.x - cx, p.y - cy));
    const double r_min = r_surface + options.margin_fraction * (xmax - xmin);

    std::vector<std::size_t> candidates;
    std::vector<double> radii;
    for (std::size_t i = 0; i < c.internal.size(); ++i) {
        const double r = std::hypot(c.internal[i].x - cx, c.internal[i].y - cy);
        if (r >= r_min) {
            candidates.push_back(i);
            radii.push_back(r);
        }
    }
    std::vector<std::size_t> band;
    if (!candidates.empty()) {
        const double r_max = quantile(radii, options.outlier_quantile);
        for (std::size_t k = 0; k < candidates.size(); ++k) {
            if (radii[k] <= r_max) band.push_back(candidates[k]);
        }
    }
    if (band.size() < options.min_points) {
        throw Error(ErrorKind::data, "insufficient_farfield",
                    fmt::format("far-field band holds {} points, at least {} required", band.size(),
                                options.min_points));
    }
    return band;
}

FreestreamState freestream_state(const AirfoilCase& c, std::span<const std::size_t> band) {
    if (band.empty()) throw Error(ErrorKind::data, "insufficient_farfield", "far-field band is empty");
    FreestreamState fs;
    for (std::size_t i : band) {
        fs.pbar_inf += c.internal_pbar.at(i);
        fs.u_inf += std::hypot(c.internal_u.at(i), c.internal_v.at(i));
    }
    fs.pbar_inf /= static_cast<double>(band.size());
    fs.u_inf /= static_cast<double>(band.size());
    fs.band.assign(band.begin(), band.end());
    return fs;
}

std::vector<double> reconstruct_pressure(std::span<const double> pbar, const FreestreamState& fs, double rho,
                                         double p_inf) {
    std::vector<double> p(pbar.size());
    for (std::size_t j = 0; j < pbar.size(); ++j) p[j] = p_inf + rho * (pbar[j] - fs.pbar_inf);
    return p;
}

std::vector<double> cp_from_pressure(std::span<const double> p, const FreestreamState& fs, double rho,
                                     double p_inf) {
    const double q = q_inf(fs, rho);
    std::vector<double> cp(p.size());
    for (std::size_t j = 0; j < p.size(); ++j) cp[j] = (p[j] - p_inf) / q;
    return cp;
}

std::vector<double> pressure_from_cp(std::span<const double> cp, const FreestreamState& fs, double rho,
                                     double p_inf) {
    const double q = q_inf(fs, rho);
    std::vector<double> p(cp.size());
    for (std::size_t j = 0; j < cp.size(); ++j) p[j] = p_inf + q * cp[j];
    return p;
}

std::vector<double> cp_from_edge_velocity(std::span<const double> ratio) {
    std::vector<double> cp(ratio.size());
    for (std::size_t j = 0; j < ratio.size(); ++j) cp[j] = 1.0 - ratio[j] * ratio[j];
    return cp;
}

double reynolds(double rho, double U, double chord, double mu) {
    if (!(chord > 0.0) || !(U > 0.0) || !(mu > 0.0)) {
        throw config_error("Reynolds number needs positive chord, speed and viscosity");
    }
    return rho * U * chord / mu;
}

double reynolds(const AirfoilCase& c) { return reynolds(c.rho, c.U, c.chord(), c.mu); }

std::vector<double> interpolate_linear(std::span<const double> xs, std::span<const double> ys,
                                       std::span<const double> targets) {
    if (xs.size() != ys.size()) throw dimension_error("interpolation sources and values differ in length");
    if (xs.size() < 2) throw Error(ErrorKind::data, "interpolation", "interpolation needs at least 2 source stations");
    for (std::size_t j = 1; j < xs.size(); ++j) {
        if (!(xs[j] > xs[j - 1])) {
            throw Error(ErrorKind::data, "interpolation", "interpolation sources must be strictly increasing");
        }
    }
    std::vector<double> out(targets.size());
    for (std::size_t t = 0; t < targets.size(); ++t) {
        const double x = targets[t];
        if (x <= xs.front()) {
            out[t] = ys.front();
        } else if (x >= xs.back()) {
            out[t] = ys.back();
        } else {
            const auto hi = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin());
            const std::size_t lo = hi - 1;
            if (x == xs[lo]) {
                out[t] = ys[lo];
            } else {
                const double w = (x - xs[lo]) / (xs[hi] - xs[lo]);
                out[t] = ys[lo] + w * (ys[hi] - ys[lo]);
            }
        }
    }
    return out;
}

std::vector<double> interpolate_to_stations(std::span<const Point> surface, std::span<const double> cp,
                                            std::span<const Station> stations) {
    require_same(surface.size(), cp.size(), "surface Cp");
    std::vector<std::pair<double, double>> up, lo;
    for (std::size_t j = 0; j < surface.size(); ++j) (surface[j].y >= 0.0 ? up : lo).emplace_back(surface[j].x, cp[j]);
    const SortedSide upper = sorted_side(std::move(up), "upper");
    const SortedSide lower = sorted_side(std::move(lo), "lower");
    std::vector<double> out(stations.size());
    for (std::size_t s = 0; s < stations.size(); ++s) {
        const SortedSide& side = stations[s].side == Side::upper ? upper : lower;
        const double target = stations[s].x;
        out[s] = interpolate_linear(side.x, side.cp, std::span<const double>(&target, 1))[0];
    }
    return out;
}

ProcessedCase process_case(const AirfoilCase& c, std::span<const Station> stations, const BandOptions& options) {
    c.validate();
    ProcessedCase pc;
    pc.name = c.name;
    pc.U = c.U;
    pc.aoa = c.aoa;
    pc.chord = c.chord();
    pc.reynolds = reynolds(c);
    if (!c.surface_pbar.empty() && !c.internal.empty()) {
        pc.freestream = freestream_state(c, farfield_band(c, options));
        pc.surface_cp = cp_from_pressure(reconstruct_pressure(c.surface_pbar, pc.freestream, c.rho, c.p_inf),
                                         pc.freestream, c.rho, c.p_inf);
    } else if (!c.surface_cp.empty()) {
        pc.freestream.u_inf = c.U;
        pc.surface_cp = c.surface_cp;
    } else if (!c.surface_p.empty()) {
        pc.freestream.u_inf = c.U;
        pc.surface_cp = cp_from_pressure(c.surface_p, pc.freestream, c.rho, c.p_inf);
    } else {
        throw Error(ErrorKind::data, "missing_pressure",
                    fmt::format("case '{}' carries no surface pressure (pbar with a field, Cp or p)", c.name));
    }
    if (!stations.empty()) pc.station_cp = interpolate_to_stations(c.surface, pc.surface_cp, stations);
    return pc;
}

std::string processed_case_json(const ProcessedCase& pc, std::span<const Station> stations) {
    nlohmann::json j;
    j["name"] = pc.name;
    j["U"] = pc.U;
    j["aoa"] = pc.aoa;
    j["chord"] = pc.chord;
    j["reynolds"] = pc.reynolds;
    j["pbar_inf"] = pc.freestream.pbar_inf;
    j["u_inf"] = pc.freestream.u_inf;
    j["band_size"] = pc.freestream.band.size();
    j["surface_cp"] = pc.surface_cp;
    auto st = nlohmann::json::array();
    for (std::size_t s = 0; s < stations.size() && s < pc.station_cp.size(); ++s) {
        st.push_back({{"x", stations[s].x},
                      {"side", stations[s].side == Side::upper ? "upper" : "lower"},
                      {"cp", pc.station_cp[s]}});
    }
    j["stations"] = std::move(st);
    return j.dump(2) + "\n";
}

CaseMeta parse_case_filename(const std::string& path) {
    const std::string stem = std::filesystem::path(path).stem().string();
    std::vector<double> numbers;
    std::size_t start = 0;
    while (start <= stem.size() && numbers.size() < 2) {
        const std::size_t end = std::min(stem.find('_', start), stem.size());
        if (auto v = csv::to_double(std::string_view(stem).substr(start, end - start))) numbers.push_back(*v);
        start = end + 1;
    }
    if (numbers.size() < 2) {
        throw config_error(fmt::format("cannot read U and AoA from file name '{}'; supply --meta", stem));
    }
    return {numbers[0], numbers[1]};
}

std::map<std::string, CaseMeta> read_meta_csv(const std::string& path) {
    const csv::Table t = csv::read(path);
    const std::size_t cf = t.require("file"), cu = t.require("U"), ca = t.require("aoa");
    std::map<std::string, CaseMeta> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        out[std::filesystem::path(t.rows[r][cf]).stem().string()] = {t.number(r, cu), t.number(r, ca)};
    }
    return out;
}

CaseMeta case_meta(const std::string& path, const std::map<std::string, CaseMeta>* overrides) {
    if (overrides) {
        const auto it = overrides->find(std::filesystem::path(path).stem().string());
        if (it != overrides->end()) return it->second;
    }
    return parse_case_filename(path);
}

AirfoilCase read_surface_case(const std::string& path, const CaseMeta& meta) {
    const csv::Table t = csv::read(path);
    const std::size_t cx = t.require("x"), cy = t.require("y");
    const auto cpbar = t.column("pbar"), cp = t.column("p"), ccp = t.column("Cp");
    if (!cpbar && !cp && !ccp) throw ParseError(1, fmt::format("{}: needs a pbar, p or Cp column", path));
    AirfoilCase c;
    c.name = std::filesystem::path(path).stem().string();
    c.U = meta.U;
    c.aoa = meta.aoa;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        c.surface.push_back({t.number(r, cx), t.number(r, cy)});
        if (cpbar) c.surface_pbar.push_back(t.number(r, *cpbar));
        if (cp) c.surface_p.push_back(t.number(r, *cp));
        if (ccp) c.surface_cp.push_back(t.number(r, *ccp));
    }
    return c;
}

void read_internal_field(const std::string& path, AirfoilCase& c) {
    const csv::Table t = csv::read(path);
    const std::size_t cx = t.require("x"), cy = t.require("y"), cpb = t.require("pbar"), cu = t.require("u"),
                      cv = t.require("v");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        c.internal.push_back({t.number(r, cx), t.number(r, cy)});
        c.internal_pbar.push_back(t.number(r, cpb));
        c.internal_u.push_back(t.number(r, cu));
        c.internal_v.push_back(t.number(r, cv));
    }
}

}  // namespace kmf::fields
