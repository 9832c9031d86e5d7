#include "kmf/geometry.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <json.hpp>

#include "kmf/csv.hpp"
#include "kmf/error.hpp"

namespace kmf::geometry {

namespace {

constexpr int kDegree = 3;

Error degenerate_geometry(const std::string& msg) { return {ErrorKind::data, "degenerate_geometry", msg}; }

double dist(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

struct OrientedSide {
    std::vector<Point> points;
    std::vector<double> zeta;
};

/// Orients a side leading edge -> trailing edge and attaches parameters.
OrientedSide orient(std::span<const Point> points, const std::optional<std::vector<double>>& zeta,
                    const char* name) {
    if (points.size() < 2) throw config_error(fmt::format("{} surface needs at least 2 points", name));
    OrientedSide side{{points.begin(), points.end()}, {}};
    if (zeta) {
        if (zeta->size() != points.size()) {
            throw dimension_error(fmt::format("{} surface has {} points but {} zeta values", name, points.size(),
                                              zeta->size()));
        }
        side.zeta = *zeta;
        for (double z : side.zeta) {
            if (!(z >= 0.0 && z <= 1.0)) throw domain_error(fmt::format("{} zeta value {} outside [0, 1]", name, z));
        }
    }
    if (side.points.front().x > side.points.back().x) {
        std::reverse(side.points.begin(), side.points.end());
        std::reverse(side.zeta.begin(), side.zeta.end());
    }
    if (!zeta) side.zeta = parameterize_points(side.points);
    return side;
}

/// Index maps from per-side control-point index to the unknown vectors.
/// x unknowns: LE, TE, upper 2..n-2, lower 2..n-2 (index 1 shares LE.x when pinned).
/// y unknowns: LE, TE, upper 1..n-2, lower 1..n-2.
struct Layout {
    std::size_t n;  // control points per side
    bool pin = true;

    std::size_t nx() const { return pin ? 2 + 2 * (n - 3) : ny(); }
    std::size_t ny() const { return 2 + 2 * (n - 2); }

    std::size_t x_col(Side side, std::size_t i) const {
        if (!pin) return y_col(side, i);
        if (i <= 1) return 0;
        if (i == n - 1) return 1;
        return 2 + (side == Side::lower ? n - 3 : 0) + (i - 2);
    }
    std::size_t y_col(Side side, std::size_t i) const {
        if (i == 0) return 0;
        if (i == n - 1) return 1;
        return 2 + (side == Side::lower ? n - 2 : 0) + (i - 1);
    }
};

void fill_rows(const OrientedSide& side, Side which, const splines::ClampedBasis& basis, const Layout& layout,
               Eigen::MatrixXd& ax, Eigen::MatrixXd& ay, Eigen::VectorXd& bx, Eigen::VectorXd& by,
               Eigen::Index offset) {
    std::vector<double> values(kDegree + 1);
    for (std::size_t j = 0; j < side.points.size(); ++j) {
        const auto row = offset + static_cast<Eigen::Index>(j);
        const std::size_t first = basis.eval_nonzero(side.zeta[j], values);
        for (std::size_t q = 0; q < values.size(); ++q) {
            const std::size_t i = first + q;
            ax(row, static_cast<Eigen::Index>(layout.x_col(which, i))) += values[q];
            ay(row, static_cast<Eigen::Index>(layout.y_col(which, i))) += values[q];
        }
        bx[row] = side.points[j].x;
        by[row] = side.points[j].y;
    }
}

Eigen::VectorXd solve_normal(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const FitOptions& options,
                             double& condition) {
    const Eigen::MatrixXd normal = a.transpose() * a;
    const Eigen::VectorXd rhs = a.transpose() * b;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(normal, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    const double smax = sv[0];
    const double smin = sv[sv.size() - 1];
    const double cond = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
    condition = std::max(condition, cond);
    if (!(cond <= options.max_condition)) {
        throw IllConditionedFit(cond, fmt::format("normal equations are ill-conditioned (condition {:.3e})", cond));
    }
    return svd.solve(rhs);
}

std::vector<Point> control_polygon(const Layout& layout, Side side, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& y) {
    std::vector<Point> ctrl(layout.n);
    for (std::size_t i = 0; i < layout.n; ++i) {
        ctrl[i] = {x[static_cast<Eigen::Index>(layout.x_col(side, i))],
                   y[static_cast<Eigen::Index>(layout.y_col(side, i))]};
    }
    return ctrl;
}

std::string side_name(Side s) { return s == Side::upper ? "upper" : "lower"; }

nlohmann::json points_json(const std::vector<Point>& pts) {
    auto arr = nlohmann::json::array();
    for (const Point& p : pts) arr.push_back({p.x, p.y});
    return arr;
}

std::vector<Point> points_from_json(const nlohmann::json& arr) {
    std::vector<Point> pts;
    for (const auto& p : arr) pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    return pts;
}

}  // namespace

Point BSplineCurve::eval(double zeta) const {
    std::vector<double> values(static_cast<std::size_t>(basis.degree()) + 1);
    const std::size_t first = basis.eval_nonzero(zeta, values);
    Point p;
    for (std::size_t q = 0; q < values.size(); ++q) {
        p.x += values[q] * control[first + q].x;
        p.y += values[q] * control[first + q].y;
    }
    return p;
}

double AirfoilCurve::chord() const { return dist(leading_edge(), trailing_edge()); }

std::vector<double> parameterize_points(std::span<const Point> points) {
    if (points.size() < 2) throw config_error("parameterization needs at least 2 points");
    std::vector<double> zeta(points.size(), 0.0);
    for (std::size_t j = 1; j < points.size(); ++j) zeta[j] = zeta[j - 1] + dist(points[j - 1], points[j]);
    const double total = zeta.back();
    if (!(total > 0.0)) throw degenerate_geometry("all surface points coincide");
    for (double& z : zeta) z /= total;
    zeta.back() = 1.0;
    return zeta;
}

SurfacePoints split_loop(std::span<const Point> points) {
    if (points.size() < 3) throw config_error("an airfoil loop needs at least 3 points");
    const auto le = static_cast<std::size_t>(
        std::min_element(points.begin(), points.end(), [](Point a, Point b) { return a.x < b.x; }) - points.begin());
    if (le == 0 || le + 1 == points.size()) {
        throw degenerate_geometry("leading edge (minimum x) is at an end of the loop; points are not a closed loop");
    }
    std::vector<Point> first(points.begin(), points.begin() + static_cast<std::ptrdiff_t>(le) + 1);
    std::reverse(first.begin(), first.end());
    std::vector<Point> second(points.begin() + static_cast<std::ptrdiff_t>(le), points.end());
    auto mean_y = [](const std::vector<Point>& pts) {
        double s = 0.0;
        for (const Point& p : pts) s += p.y;
        return s / static_cast<double>(pts.size());
    };
    if (mean_y(first) >= mean_y(second)) return {std::move(first), std::move(second)};
    return {std::move(second), std::move(first)};
}

SurfacePoints split_by_sign(std::span<const Point> points) {
    SurfacePoints s;
    for (const Point& p : points) (p.y >= 0.0 ? s.upper : s.lower).push_back(p);
    auto by_x = [](Point a, Point b) { return a.x < b.x; };
    std::stable_sort(s.upper.begin(), s.upper.end(), by_x);
    std::stable_sort(s.lower.begin(), s.lower.end(), by_x);
    return s;
}

AirfoilCurve make_curve(std::vector<Point> upper_ctrl, std::vector<Point> lower_ctrl) {
    if (upper_ctrl.size() != lower_ctrl.size() || upper_ctrl.size() < kDegree + 1) {
        throw config_error("both sides need the same number (>= 4) of control points");
    }
    const auto basis = splines::ClampedBasis::uniform(kDegree, upper_ctrl.size());
    return {{basis, std::move(upper_ctrl)}, {basis, std::move(lower_ctrl)}};
}

FitResult fit_bspline_lsq(const SurfacePoints& surface, const FitOptions& options) {
    if (options.n_ctrl < 6 || options.n_ctrl % 2 != 0) {
        throw config_error(fmt::format("n_ctrl must be even and at least 6, got {}", options.n_ctrl));
    }
    const std::size_t total = surface.upper.size() + surface.lower.size();
    if (total < options.n_ctrl) {
        throw config_error(fmt::format("{} surface points cannot determine {} control points", total, options.n_ctrl));
    }
    const OrientedSide upper = orient(surface.upper, options.zeta_upper, "upper");
    const OrientedSide lower = orient(surface.lower, options.zeta_lower, "lower");

    const Layout layout{(options.n_ctrl + 2) / 2, options.pin_leading_edge_x};
    const auto basis = splines::ClampedBasis::uniform(kDegree, layout.n);
    const auto rows = static_cast<Eigen::Index>(total);
    Eigen::MatrixXd ax = Eigen::MatrixXd::Zero(rows, static_cast<Eigen::Index>(layout.nx()));
    Eigen::MatrixXd ay = Eigen::MatrixXd::Zero(rows, static_cast<Eigen::Index>(layout.ny()));
    Eigen::VectorXd bx(rows), by(rows);
    fill_rows(upper, Side::upper, basis, layout, ax, ay, bx, by, 0);
    fill_rows(lower, Side::lower, basis, layout, ax, ay, bx, by, static_cast<Eigen::Index>(upper.points.size()));

    FitReport report;
    const Eigen::VectorXd x = solve_normal(ax, bx, options, report.condition);
    const Eigen::VectorXd y = solve_normal(ay, by, options, report.condition);
    FitResult result{{{basis, control_polygon(layout, Side::upper, x, y)},
                      {basis, control_polygon(layout, Side::lower, x, y)}},
                     {}};

    report.zeta_upper = upper.zeta;
    report.zeta_lower = lower.zeta;
    double sq = 0.0;
    for (const auto* side : {&upper, &lower}) {
        const BSplineCurve& c = side == &upper ? result.curve.upper : result.curve.lower;
        for (std::size_t j = 0; j < side->points.size(); ++j) {
            const double r = dist(side->points[j], c.eval(side->zeta[j]));
            report.residuals.push_back(r);
            sq += r * r;
        }
    }
    report.rmse = std::sqrt(sq / static_cast<double>(total));
    result.report = std::move(report);
    return result;
}

std::vector<Point> reconstruct_curve(const AirfoilCurve& curve, Side side, std::span<const double> zeta) {
    const BSplineCurve& c = side == Side::upper ? curve.upper : curve.lower;
    std::vector<Point> out;
    out.reserve(zeta.size());
    for (double z : zeta) out.push_back(c.eval(z));
    return out;
}

FeatureLayout parse_layout(std::string_view name) {
    if (name == "xy-flat") return FeatureLayout::xy_flat;
    if (name == "y-only") return FeatureLayout::y_only;
    throw config_error(fmt::format("unknown feature layout '{}' (expected xy-flat or y-only)", name));
}

std::string_view layout_name(FeatureLayout layout) { return layout == FeatureLayout::xy_flat ? "xy-flat" : "y-only"; }

std::size_t feature_count(std::size_t n_ctrl, FeatureLayout layout) {
    return layout == FeatureLayout::xy_flat ? 2 * n_ctrl : n_ctrl;
}

std::vector<double> geometry_features(const AirfoilCurve& curve, FeatureLayout layout) {
    const Point le = curve.leading_edge();
    const double c = curve.chord();
    if (!(c > 0.0)) throw degenerate_geometry("curve has zero chord");
    std::vector<Point> ordered{curve.leading_edge(), curve.trailing_edge()};
    const std::size_t n = curve.upper.control.size();
    for (std::size_t i = 1; i + 1 < n; ++i) ordered.push_back(curve.upper.control[i]);
    for (std::size_t i = 1; i + 1 < n; ++i) ordered.push_back(curve.lower.control[i]);

    std::vector<double> features;
    features.reserve(feature_count(curve.n_ctrl(), layout));
    for (const Point& p : ordered) {
        if (layout == FeatureLayout::xy_flat) features.push_back((p.x - le.x) / c);
        features.push_back((p.y - le.y) / c);
    }
    return features;
}

SurfacePoints naca4(std::string_view digits, std::size_t points_per_side, bool closed_te) {
    int code = 0;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), code);
    if (digits.size() != 4 || ec != std::errc{} || ptr != digits.data() + digits.size()) {
        throw config_error(fmt::format("'{}' is not a NACA 4-digit designation", digits));
    }
    if (points_per_side < 2) throw config_error("need at least 2 points per side");
    const double m = (code / 1000) / 100.0;
    const double p = ((code / 100) % 10) / 10.0;
    const double t = (code % 100) / 100.0;
    const double a4 = closed_te ? 0.1036 : 0.1015;

    SurfacePoints s;
    for (std::size_t i = 0; i < points_per_side; ++i) {
        const double beta = std::numbers::pi * static_cast<double>(i) / static_cast<double>(points_per_side - 1);
        const double x = 0.5 * (1.0 - std::cos(beta));
        const double yt =
            5.0 * t * (0.2969 * std::sqrt(x) - 0.1260 * x - 0.3516 * x * x + 0.2843 * x * x * x - a4 * x * x * x * x);
        double yc = 0.0, dyc = 0.0;
        if (m > 0.0 && p > 0.0) {
            if (x < p) {
                yc = m / (p * p) * (2.0 * p * x - x * x);
                dyc = 2.0 * m / (p * p) * (p - x);
            } else {
                yc = m / ((1.0 - p) * (1.0 - p)) * ((1.0 - 2.0 * p) + 2.0 * p * x - x * x);
                dyc = 2.0 * m / ((1.0 - p) * (1.0 - p)) * (p - x);
            }
        }
        const double theta = std::atan(dyc);
        s.upper.push_back({x - yt * std::sin(theta), yc + yt * std::cos(theta)});
        s.lower.push_back({x + yt * std::sin(theta), yc - yt * std::cos(theta)});
    }
    return s;
}

SurfaceTable read_surface_csv(const std::string& path) {
    const csv::Table table = csv::read(path);
    const std::size_t cx = table.require("x");
    const std::size_t cy = table.require("y");
    const auto cs = table.column("side");
    const auto cz = table.column("zeta");
    SurfaceTable out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        out.points.push_back({table.number(r, cx), table.number(r, cy)});
        if (cs) {
            const std::string& v = table.rows[r][*cs];
            if (v == "upper") {
                out.sides.push_back(Side::upper);
            } else if (v == "lower") {
                out.sides.push_back(Side::lower);
            } else {
                throw ParseError(table.lines[r], fmt::format("{}:{}: side must be 'upper' or 'lower', got '{}'", path,
                                                             table.lines[r], v));
            }
        }
        if (cz) out.zeta.push_back(table.number(r, *cz));
    }
    return out;
}

SurfacePoints surface_from_table(const SurfaceTable& table, bool by_sign, FitOptions* options) {
    if (options && table.points.size() < options->n_ctrl) {
        throw config_error(fmt::format("{} surface points cannot determine {} control points", table.points.size(),
                                       options->n_ctrl));
    }
    if (table.sides.empty()) {
        if (!table.zeta.empty()) throw config_error("a zeta column requires a side column");
        return by_sign ? split_by_sign(table.points) : split_loop(table.points);
    }
    SurfacePoints s;
    std::vector<double> zu, zl;
    for (std::size_t i = 0; i < table.points.size(); ++i) {
        const bool up = table.sides[i] == Side::upper;
        (up ? s.upper : s.lower).push_back(table.points[i]);
        if (!table.zeta.empty()) (up ? zu : zl).push_back(table.zeta[i]);
    }
    if (options && !table.zeta.empty()) {
        options->zeta_upper = std::move(zu);
        options->zeta_lower = std::move(zl);
    }
    return s;
}

void write_surface_csv(const std::string& path, const AirfoilCurve& curve, std::span<const double> zeta_upper,
                       std::span<const double> zeta_lower) {
    std::string text = "x,y,side,zeta\n";
    for (Side side : {Side::upper, Side::lower}) {
        const auto zeta = side == Side::upper ? zeta_upper : zeta_lower;
        const auto pts = reconstruct_curve(curve, side, zeta);
        for (std::size_t j = 0; j < pts.size(); ++j) {
            text += fmt::format("{},{},{},{}\n", pts[j].x, pts[j].y, side_name(side), zeta[j]);
        }
    }
    csv::write_file(path, text);
}

std::string curve_to_json(const AirfoilCurve& curve) {
    nlohmann::json j;
    j["degree"] = curve.upper.basis.degree();
    j["n_ctrl"] = curve.n_ctrl();
    j["knots"] = curve.upper.basis.knots();
    j["upper"] = points_json(curve.upper.control);
    j["lower"] = points_json(curve.lower.control);
    j["chord"] = curve.chord();
    return j.dump(2) + "\n";
}

AirfoilCurve curve_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        const int degree = j.at("degree").get<int>();
        auto knots = j.at("knots").get<std::vector<double>>();
        splines::ClampedBasis basis(degree, std::move(knots));
        auto upper = points_from_json(j.at("upper"));
        auto lower = points_from_json(j.at("lower"));
        if (upper.size() != basis.size() || lower.size() != basis.size()) {
            throw dimension_error("control polygon length does not match the knot vector");
        }
        return {{basis, std::move(upper)}, {basis, std::move(lower)}};
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, fmt::format("invalid curve JSON: {}", e.what()));
    }
}

void write_fit_report_csv(const std::string& path, const FitReport& report) {
    std::string text = "side,index,zeta,residual\n";
    std::size_t k = 0;
    for (Side side : {Side::upper, Side::lower}) {
        const auto& zeta = side == Side::upper ? report.zeta_upper : report.zeta_lower;
        for (std::size_t j = 0; j < zeta.size(); ++j, ++k) {
            text += fmt::format("{},{},{},{}\n", side_name(side), j, zeta[j], report.residuals[k]);
        }
    }
    csv::write_file(path, text);
}

}  // namespace kmf::geometry
