#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <json.hpp>

#include "kmf/error.hpp"
#include "kmf/fields.hpp"
#include "kmf/geometry.hpp"
#include "kmf/normalization.hpp"
#include "support.hpp"

using namespace kmf;
using namespace kmf::fields;

namespace {

// Small airfoil near the origin with a random cloud of internal points out to radius ~1.
AirfoilCase cloud_case(test::Gen& g, std::size_t n_internal, double scale = 0.05) {
    AirfoilCase c;
    c.name = "cloud";
    c.U = 30.0;
    const auto s = geometry::naca4("2412", 40);
    for (const auto& p : s.upper) c.surface.push_back({scale * p.x, scale * p.y});
    for (std::size_t j = 1; j < s.lower.size(); ++j) c.surface.push_back({scale * s.lower[j].x, scale * s.lower[j].y});
    for (std::size_t i = 0; i < n_internal; ++i) {
        const double r = std::sqrt(g.uniform(0.0, 1.0));
        const double t = g.uniform(0.0, 2.0 * std::numbers::pi);
        c.internal.push_back({r * std::cos(t), r * std::sin(t)});
        c.internal_pbar.push_back(g.uniform(-50, 50));
        c.internal_u.push_back(c.U + g.uniform(-1, 1));
        c.internal_v.push_back(g.uniform(-1, 1));
    }
    return c;
}

// Two-pass brute-force filter written out independently of the library.
std::vector<std::size_t> brute_band(const AirfoilCase& c, double margin, double q) {
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& p : c.surface) {
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
    }
    const double cx = (xmin + xmax) / 2, cy = (ymin + ymax) / 2;
    double rs = 0.0;
    for (const auto& p : c.surface) rs = std::max(rs, std::sqrt((p.x - cx) * (p.x - cx) + (p.y - cy) * (p.y - cy)));
    auto radius = [&](std::size_t i) {
        const double dx = c.internal[i].x - cx, dy = c.internal[i].y - cy;
        return std::sqrt(dx * dx + dy * dy);
    };
    std::vector<double> cand;
    for (std::size_t i = 0; i < c.internal.size(); ++i)
        if (radius(i) >= rs + margin * (xmax - xmin)) cand.push_back(radius(i));
    if (cand.empty()) return {};
    std::sort(cand.begin(), cand.end());
    const double h = q * static_cast<double>(cand.size() - 1);
    const auto k = static_cast<std::size_t>(h);
    const double cut = k + 1 < cand.size() ? cand[k] + (h - static_cast<double>(k)) * (cand[k + 1] - cand[k]) : cand[k];
    std::vector<std::size_t> band;
    for (std::size_t i = 0; i < c.internal.size(); ++i) {
        const double r = radius(i);
        if (r >= rs + margin * (xmax - xmin) && r <= cut) band.push_back(i);
    }
    return band;
}

FreestreamState state(double pbar_inf, double u_inf) {
    FreestreamState fs;
    fs.pbar_inf = pbar_inf;
    fs.u_inf = u_inf;
    return fs;
}

}  // namespace

TEST_SUITE("fields") {

TEST_CASE("far-field band on a dense symmetric cloud") {
    test::Gen g(51);
    const AirfoilCase c = cloud_case(g, 10000);
    const auto band = farfield_band(c);
    const auto oracle = brute_band(c, 0.5, 0.99);
    CHECK(band == oracle);
    CHECK(band.size() > 9000);
}

TEST_CASE("far-field band equals the brute-force filter on random clouds") {
    test::Gen g(52);
    for (int t = 0; t < 100; ++t) {
        const AirfoilCase c = cloud_case(g, g.index(500, 3000), g.uniform(0.02, 0.3));
        BandOptions opt;
        opt.margin_fraction = g.uniform(0.1, 2.0);
        opt.outlier_quantile = g.uniform(0.8, 1.0);
        opt.min_points = 10;
        const auto oracle = brute_band(c, opt.margin_fraction, opt.outlier_quantile);
        if (oracle.size() < opt.min_points) {
            CHECK_THROWS_AS(farfield_band(c, opt), Error);
        } else {
            CHECK(farfield_band(c, opt) == oracle);
        }
    }
}

TEST_CASE("far-field band errors") {
    test::Gen g(53);
    AirfoilCase c = cloud_case(g, 500, 1.0);
    // every internal point within the surface radius
    for (auto& p : c.internal) p = {0.5 + 0.01 * p.x, 0.01 * p.y};
    try {
        farfield_band(c);
        FAIL("expected insufficient far field");
    } catch (const Error& e) {
        CHECK(e.code() == "insufficient_farfield");
        CHECK(e.kind() == ErrorKind::data);
    }
    AirfoilCase none = cloud_case(g, 0);
    CHECK_THROWS_AS(farfield_band(none), Error);
    AirfoilCase sparse = cloud_case(g, 50);
    CHECK_THROWS_AS(farfield_band(sparse), Error);
}

TEST_CASE("band membership is translation invariant") {
    test::Gen g(54);
    for (int t = 0; t < 20; ++t) {
        const AirfoilCase c = cloud_case(g, 2000);
        AirfoilCase moved = c;
        const double dx = g.uniform(-10, 10), dy = g.uniform(-10, 10);
        for (auto& p : moved.surface) p = {p.x + dx, p.y + dy};
        for (auto& p : moved.internal) p = {p.x + dx, p.y + dy};
        CHECK(farfield_band(moved) == farfield_band(c));
    }
}

TEST_CASE("freestream state examples") {
    test::Gen g(55);
    AirfoilCase c = cloud_case(g, 300);
    std::vector<std::size_t> all(c.internal.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    std::fill(c.internal_pbar.begin(), c.internal_pbar.end(), 12.5);
    std::fill(c.internal_u.begin(), c.internal_u.end(), 41.0);
    std::fill(c.internal_v.begin(), c.internal_v.end(), 0.0);
    const auto fs = freestream_state(c, all);
    CHECK(fs.pbar_inf == doctest::Approx(12.5).epsilon(1e-14));
    CHECK(fs.u_inf == doctest::Approx(41.0).epsilon(1e-14));

    c.internal_u[0] = 3.0;
    c.internal_v[0] = 0.0;
    c.internal_u[1] = 3.0;
    c.internal_v[1] = 4.0;
    const std::vector<std::size_t> two{0, 1};
    CHECK(freestream_state(c, two).u_inf == 4.0);
    CHECK_THROWS_AS(freestream_state(c, std::vector<std::size_t>{}), Error);
}

TEST_CASE("pressure and pressure coefficient examples") {
    const auto fs = state(7.0, 40.0);
    const std::vector<double> at{7.0, 107.0};
    const auto p = reconstruct_pressure(at, fs);
    CHECK(p[0] == 101325.0);
    CHECK(p[1] == doctest::Approx(101447.5).epsilon(1e-15));

    const std::vector<double> pp{kPInf, kPInf + 490.0, kPInf + 0.5 * kRho * 1600.0};
    const auto cp = cp_from_pressure(pp, fs);
    CHECK(cp[0] == 0.0);
    CHECK(cp[1] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(cp[2] == doctest::Approx(1.0).epsilon(1e-15));
    try {
        cp_from_pressure(pp, state(0.0, 0.0));
        FAIL("expected a domain error");
    } catch (const Error& e) {
        CHECK(e.code() == "domain");
    }

    const std::vector<double> ratio{1.0, 0.0, 1.2};
    const auto ce = cp_from_edge_velocity(ratio);
    CHECK(ce[0] == 0.0);
    CHECK(ce[1] == 1.0);
    CHECK(ce[2] == doctest::Approx(-0.44).epsilon(1e-14));
}

TEST_CASE("reduced pressure is a gauge") {
    test::Gen g(56);
    for (int t = 0; t < 20; ++t) {
        AirfoilCase c = cloud_case(g, 1500);
        for (std::size_t j = 0; j < c.surface.size(); ++j) c.surface_pbar.push_back(g.uniform(-400, 200));
        const auto base = process_case(c, {});
        AirfoilCase shifted = c;
        const double k = g.uniform(-1e4, 1e4);
        for (double& v : shifted.surface_pbar) v += k;
        for (double& v : shifted.internal_pbar) v += k;
        const auto moved = process_case(shifted, {});
        for (std::size_t j = 0; j < base.surface_cp.size(); ++j)
            CHECK(std::abs(moved.surface_cp[j] - base.surface_cp[j]) <= 1e-9 * (1.0 + std::abs(base.surface_cp[j])));
    }
}

TEST_CASE("pressure round trip") {
    test::Gen g(57);
    for (int t = 0; t < 100; ++t) {
        const auto fs = state(g.uniform(-100, 100), g.uniform(5, 80));
        const auto pbar = g.vec(50, -2000, 2000);
        const auto p = reconstruct_pressure(pbar, fs);
        const auto back = pressure_from_cp(cp_from_pressure(p, fs), fs);
        for (std::size_t j = 0; j < p.size(); ++j) CHECK(std::abs(back[j] - p[j]) <= 1e-9 * std::abs(p[j]));
    }
}

TEST_CASE("reynolds number") {
    CHECK(reynolds(1.225, 30.0, 1.0, 1.81e-5) == doctest::Approx(2.0304e6).epsilon(1e-4));
    CHECK(reynolds(1.225, 30.0, 2.0) == doctest::Approx(2.0 * reynolds(1.225, 30.0, 1.0)).epsilon(1e-15));
    CHECK_THROWS_AS(reynolds(1.225, 0.0, 1.0), Error);
    test::Gen g(58);
    AirfoilCase c = cloud_case(g, 10, 1.0);
    double xmin = 1e300, xmax = -1e300;
    for (const auto& p : c.surface) {
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
    }
    CHECK(c.chord() == xmax - xmin);
    CHECK(reynolds(c) == doctest::Approx(reynolds(kRho, 30.0, c.chord())).epsilon(1e-15));
    c.U = 0.0;
    CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("min-max normalization") {
    test::Gen g(59);
    const RowMatrix train = g.matrix(40, 6, -5, 5);
    const NormStats ns = NormStats::fit(train);
    const RowMatrix n = ns.apply(train);
    for (Eigen::Index j = 0; j < 6; ++j) {
        CHECK(n.col(j).minCoeff() == 0.0);
        CHECK(n.col(j).maxCoeff() == 1.0);
    }
    const RowMatrix other = g.matrix(100, 6, -20, 20);
    const RowMatrix back = ns.invert(ns.apply(other));
    CHECK((back - other).cwiseAbs().maxCoeff() <= 1e-12);

    RowMatrix flat = train;
    flat.col(2).setConstant(3.5);
    const NormStats fs = NormStats::fit(flat);
    const RowMatrix fn = fs.apply(other);
    for (Eigen::Index r = 0; r < fn.rows(); ++r) CHECK(fn(r, 2) == 0.5);
    CHECK(fs.invert(2, 0.5) == 3.5);
    for (std::size_t j = 0; j < fs.size(); ++j) CHECK(fs.max[j] >= fs.min[j]);

    const NormStats id = NormStats::identity(3);
    const RowMatrix x = g.matrix(5, 3);
    CHECK(id.apply(x) == x);
}

TEST_CASE("linear interpolation") {
    const std::vector<double> xs{0.0, 0.25, 0.5, 1.0};
    const std::vector<double> ys{1.0, -1.0, 3.0, 2.0};
    CHECK(interpolate_linear(xs, ys, xs) == ys);
    const std::vector<double> mids{0.125, 0.375, 0.75};
    const auto m = interpolate_linear(xs, ys, mids);
    CHECK(m[0] == 0.0);
    CHECK(m[1] == 1.0);
    CHECK(m[2] == 2.5);
    const std::vector<double> out{-1.0, 2.0};
    CHECK(interpolate_linear(xs, ys, out) == std::vector<double>{1.0, 2.0});

    test::Gen g(60);
    std::vector<double> sx = g.vec(30, 0, 1);
    std::sort(sx.begin(), sx.end());
    std::vector<double> sy;
    for (double x : sx) sy.push_back(0.3 - 1.7 * x);
    std::vector<double> targets;
    for (int k = 0; k <= 1000; ++k) targets.push_back(sx.front() + (sx.back() - sx.front()) * k / 1000.0);
    const auto lin = interpolate_linear(sx, sy, targets);
    for (std::size_t k = 0; k < targets.size(); ++k) CHECK(std::abs(lin[k] - (0.3 - 1.7 * targets[k])) <= 1e-12);

    try {
        interpolate_linear(std::vector<double>{0.0}, std::vector<double>{1.0}, targets);
        FAIL("expected an interpolation error");
    } catch (const Error& e) {
        CHECK(e.code() == "interpolation");
    }
    CHECK_THROWS_AS(interpolate_linear(std::vector<double>{0, 0, 1}, std::vector<double>{1, 2, 3}, targets), Error);
}

TEST_CASE("stations interpolate on their own side") {
    std::vector<Point> surface;
    std::vector<double> cp;
    for (int j = 0; j <= 10; ++j) {
        surface.push_back({j / 10.0, 0.05});
        cp.push_back(1.0 - j / 10.0);
        surface.push_back({j / 10.0, -0.05});
        cp.push_back(-2.0 * j / 10.0);
    }
    const std::vector<Station> st{{0.35, Side::upper}, {0.35, Side::lower}, {0.5, Side::upper}};
    const auto v = interpolate_to_stations(surface, cp, st);
    CHECK(v[0] == doctest::Approx(0.65).epsilon(1e-14));
    CHECK(v[1] == doctest::Approx(-0.7).epsilon(1e-14));
    CHECK(v[2] == 0.5);
}

TEST_CASE("process case from a reduced-pressure field") {
    test::Gen g(61);
    AirfoilCase c = cloud_case(g, 4000);
    const double pbar_inf = 11.0;
    std::fill(c.internal_pbar.begin(), c.internal_pbar.end(), pbar_inf);
    std::fill(c.internal_u.begin(), c.internal_u.end(), c.U);
    std::fill(c.internal_v.begin(), c.internal_v.end(), 0.0);
    std::vector<double> ratio;
    for (const auto& p : c.surface) {
        ratio.push_back(0.5 + 10.0 * p.x);
        const double r = ratio.back();
        c.surface_pbar.push_back(pbar_inf + 0.5 * c.U * c.U * (1.0 - r * r));
    }
    const auto expected = cp_from_edge_velocity(ratio);
    const auto pc = process_case(c, {});
    CHECK(pc.freestream.u_inf == doctest::Approx(c.U).epsilon(1e-14));
    for (std::size_t j = 0; j < expected.size(); ++j) CHECK(std::abs(pc.surface_cp[j] - expected[j]) <= 1e-9);
    CHECK(pc.reynolds == doctest::Approx(reynolds(c)));

    AirfoilCase direct;
    direct.name = "direct";
    direct.U = 20.0;
    direct.surface = c.surface;
    direct.surface_cp = expected;
    CHECK(process_case(direct, {}).surface_cp == expected);

    AirfoilCase dim = direct;
    dim.surface_cp.clear();
    for (double v : expected) dim.surface_p.push_back(kPInf + v * 0.5 * kRho * 400.0);
    const auto pd = process_case(dim, {});
    for (std::size_t j = 0; j < expected.size(); ++j) CHECK(std::abs(pd.surface_cp[j] - expected[j]) <= 1e-12);

    AirfoilCase empty = direct;
    empty.surface_cp.clear();
    CHECK_THROWS_AS(process_case(empty, {}), Error);

    const std::vector<Station> st{{0.01, Side::upper}, {0.02, Side::lower}};
    const auto js = nlohmann::json::parse(processed_case_json(process_case(direct, st), st));
    CHECK(js.at("stations").size() == 2);
    CHECK(js.at("name") == "direct");
}

TEST_CASE("case metadata from file names and overrides") {
    const auto m = parse_case_filename("/data/airFoil2D_SST_43.597_5.932_3.551_3.1_1.0_18.252.csv");
    CHECK(m.U == 43.597);
    CHECK(m.aoa == 5.932);
    CHECK_THROWS_AS(parse_case_filename("case.csv"), Error);

    test::TempDir dir;
    test::spit(dir / "meta.csv", "file,U,aoa\ncase,25,-2.5\n");
    const auto meta = read_meta_csv(dir / "meta.csv");
    const auto r = case_meta(dir / "case.csv", &meta);
    CHECK(r.U == 25.0);
    CHECK(r.aoa == -2.5);

    test::spit(dir / "case.csv", "x,y,Cp\n1,0,0.1\n0,0,1\n1,0.01,0.2\n");
    const AirfoilCase c = read_surface_case(dir / "case.csv", r);
    CHECK(c.surface.size() == 3);
    CHECK(c.surface_cp == std::vector<double>{0.1, 1.0, 0.2});
    CHECK(c.U == 25.0);

    test::spit(dir / "field.csv", "x,y,pbar,u,v\n3,0,1,25,0\n");
    AirfoilCase cc = c;
    read_internal_field(dir / "field.csv", cc);
    CHECK(cc.internal.size() == 1);
    CHECK(cc.internal_u[0] == 25.0);

    test::spit(dir / "bad.csv", "x,y\n1,0\n");
    CHECK_THROWS_AS(read_surface_case(dir / "bad.csv", r), ParseError);
}

}  // TEST_SUITE
