#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include <json.hpp>

#include "kmf/csv.hpp"
#include "kmf/error.hpp"
#include "kmf/evalharness.hpp"
#include "support.hpp"

using namespace kmf;
using namespace kmf::eval;

namespace {

// Explicit sums in reverse order.
double r2_oracle(const std::vector<double>& y, const std::vector<double>& p) {
    double mean = 0.0;
    for (std::size_t i = y.size(); i-- > 0;) mean += y[i];
    mean /= static_cast<double>(y.size());
    double res = 0.0, tot = 0.0;
    for (std::size_t i = y.size(); i-- > 0;) {
        res += (y[i] - p[i]) * (y[i] - p[i]);
        tot += (y[i] - mean) * (y[i] - mean);
    }
    return 1.0 - res / tot;
}

Clock counting_clock(double step) {
    auto t = std::make_shared<double>(0.0);
    return [t, step] {
        const double now = *t;
        *t += step;
        return now;
    };
}

RegressionTask small_task(std::uint64_t seed) {
    const mfpipe::Dataset d = mfpipe::synth_benchmark(60, seed);
    return lf_task(d, mfpipe::build_cases(d, 0.0, seed), false);
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("r squared examples") {
    const std::vector<double> y{1, 2, 3};
    CHECK(r_squared(y, y) == 1.0);
    CHECK(r_squared(y, std::vector<double>{2, 2, 2}) == 0.0);
    CHECK(r_squared(y, std::vector<double>{1, 2, 4}) == 0.5);
    try {
        r_squared(std::vector<double>{4, 4, 4}, y);
        FAIL("expected undefined variance");
    } catch (const Error& e) {
        CHECK(e.code() == "undefined_variance");
    }
    CHECK_THROWS_AS(r_squared(std::vector<double>{1}, std::vector<double>{1}), Error);
    CHECK_THROWS_AS(r_squared(y, std::vector<double>{1, 2}), Error);
}

TEST_CASE("r squared matches the oracle and never exceeds one") {
    test::Gen g(81);
    for (int t = 0; t < 1000; ++t) {
        const std::size_t n = g.index(2, 300);
        const auto y = g.vec(n, -5, 5);
        std::vector<double> p = y;
        for (double& v : p) v += g.uniform(0, 2) * g.normal();
        const double r = r_squared(y, p);
        CHECK(std::abs(r - r2_oracle(y, p)) <= 1e-12 * std::max(1.0, std::abs(r)));
        CHECK(r <= 1.0);
    }
}

TEST_CASE("pooled and per-case r squared") {
    test::Gen g(82);
    const RowMatrix y = g.matrix(5, 9, -1, 1);
    const RowMatrix p = (y + 0.1 * g.matrix(5, 9, -1, 1)).eval();
    const std::vector<double> fy(y.data(), y.data() + y.size()), fp(p.data(), p.data() + p.size());
    CHECK(r_squared(y, p) == doctest::Approx(r2_oracle(fy, fp)).epsilon(1e-12));
    const auto per = r_squared_per_case(y, p);
    REQUIRE(per.size() == 5);
    for (Eigen::Index r = 0; r < 5; ++r) {
        const std::vector<double> ry(y.row(r).data(), y.row(r).data() + 9), rp(p.row(r).data(), p.row(r).data() + 9);
        CHECK(per[static_cast<std::size_t>(r)] == doctest::Approx(r2_oracle(ry, rp)).epsilon(1e-12));
    }
}

TEST_CASE("nrmse") {
    const std::vector<double> y{0, 1, 4};
    CHECK(nrmse(y, y) == 0.0);
    CHECK(nrmse(y, std::vector<double>{0.5, 1.5, 4.5}) == doctest::Approx(0.5 / 4.0).epsilon(1e-15));
    CHECK_THROWS_AS(nrmse(std::vector<double>{2, 2}, std::vector<double>{1, 2}), Error);
    test::Gen g(83);
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = g.index(2, 100);
        const auto a = g.vec(n), b = g.vec(n);
        double sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
        const double range = *std::max_element(a.begin(), a.end()) - *std::min_element(a.begin(), a.end());
        CHECK(nrmse(a, b) == doctest::Approx(std::sqrt(sq / static_cast<double>(n)) / range).epsilon(1e-12));
    }
}

TEST_CASE("fold plans") {
    const FoldPlan p10 = kfold_plan(10, 5, 1);
    for (const auto& f : p10.folds) CHECK(f.size() == 2);
    const FoldPlan p7 = kfold_plan(7, 5, 1);
    std::vector<std::size_t> sizes;
    for (const auto& f : p7.folds) sizes.push_back(f.size());
    CHECK(sizes == std::vector<std::size_t>{2, 2, 1, 1, 1});
    CHECK(kfold_plan(50, 5, 3).permutation == kfold_plan(50, 5, 3).permutation);
    CHECK(kfold_plan(50, 5, 3).permutation != kfold_plan(50, 5, 4).permutation);
    CHECK_THROWS_AS(kfold_plan(4, 5, 1), Error);

    for (std::size_t n = 5; n <= 1000; ++n) {
        const FoldPlan p = kfold_plan(n, 5, n);
        std::vector<int> seen(n, 0);
        std::size_t lo = n, hi = 0;
        for (std::size_t f = 0; f < 5; ++f) {
            lo = std::min(lo, p.folds[f].size());
            hi = std::max(hi, p.folds[f].size());
            for (std::size_t i : p.folds[f]) {
                ++seen[i];
                if (p.fold_of[i] != f) FAIL("fold_of disagrees at n = " << n);
            }
            const auto tr = p.train(f);
            if (tr.size() + p.folds[f].size() != n) FAIL("train and test do not partition at n = " << n);
        }
        if (!std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; })) FAIL("coverage broken at n = " << n);
        if (hi - lo > 1) FAIL("fold sizes differ by more than one at n = " << n);
    }
}

TEST_CASE("r squared bins") {
    const std::vector<double> high(6, 0.95);
    const auto a = bin_r2(high);
    CHECK(a.counts == std::array<std::size_t, 4>{0, 0, 0, 6});
    const std::vector<double> spread{0.65, 0.75, 0.85, 0.95};
    const auto b = bin_r2(spread);
    CHECK(b.counts == std::array<std::size_t, 4>{1, 1, 1, 1});
    CHECK(b.fraction_above_first == 0.75);
    const std::vector<double> edges{0.7, 0.8, 0.9};
    CHECK(bin_r2(edges).counts == std::array<std::size_t, 4>{0, 1, 1, 1});
    test::Gen g(84);
    for (int t = 0; t < 200; ++t) {
        const auto s = g.vec(g.index(1, 100), -1, 1);
        const auto r = bin_r2(s);
        CHECK(r.total() == s.size());
        CHECK(r.fraction_above_first == doctest::Approx(1.0 - static_cast<double>(r.counts[0]) / static_cast<double>(s.size())));
    }
}

TEST_CASE("aggregation means folds and keeps order") {
    std::vector<EvalRecord> recs;
    for (std::size_t f = 0; f < 3; ++f) {
        EvalRecord a;
        a.model = "khronos-lf";
        a.fold = f;
        a.r2 = 0.5 + 0.1 * static_cast<double>(f);
        a.params = 639;
        a.case_r2 = {0.65, 0.95};
        recs.push_back(a);
        EvalRecord b = a;
        b.model = "khronos-mf";
        b.r2 = 0.9;
        recs.push_back(b);
    }
    const auto s = aggregate(recs);
    REQUIRE(s.size() == 2);
    CHECK(s[0].model == "khronos-lf");
    CHECK(s[0].folds == 3);
    CHECK(s[0].r2 == doctest::Approx(0.6));
    CHECK(s[0].params == 639.0);
    CHECK(s[0].bins.total() == 6);
    const auto table = csv::parse(records_csv(recs));
    CHECK(table.rows.size() == 6);
    CHECK(table.header.front() == "model");
    const auto js = nlohmann::json::parse(summary_json(s));
    CHECK(js.at("models").size() == 2);
    CHECK(config_digest("abc") == config_digest("abc"));
    CHECK(config_digest("abc") != config_digest("abd"));
}

TEST_CASE("k-fold evaluation is reproducible across thread counts") {
    const mfpipe::Dataset d = mfpipe::synth_benchmark(40, 2, {.bias = mfpipe::BiasProfile::suction_damped});
    mfpipe::PipelineConfig cfg;
    cfg.lf.train.epochs = 30;
    cfg.delta.train.epochs = 30;
    const FoldPlan plan = kfold_plan(d.size(), 5, 3);
    const auto a = kfold_evaluate(d, plan, cfg, 0.3, 1, 1);
    const auto b = kfold_evaluate(d, plan, cfg, 0.3, 1, 2);
    REQUIRE(a.size() == 10);
    REQUIRE(b.size() == 10);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].model == b[i].model);
        CHECK(a[i].fold == b[i].fold);
        CHECK(a[i].r2 == b[i].r2);
        CHECK(a[i].r2 <= 1.0);
        CHECK(a[i].params >= 1);
        CHECK(a[i].train_seconds >= 0.0);
        CHECK(a[i].infer_ms_per_sample >= 0.0);
    }
    CHECK(a[0].model == "khronos-lf");
    CHECK(a[1].model == "khronos-mf");
}

TEST_CASE("budget runs with an injected clock") {
    const RegressionTask task = small_task(3);
    training::TrainConfig c;
    c.epochs = 500;
    c.peak_lr = 3e-3;
    const ModelFactory factory = [&](std::uint64_t seed) {
        return Model{khronos::KhronosModel::create(
            {static_cast<std::size_t>(task.x_train.cols()), 3, 4, static_cast<std::size_t>(task.y_train.cols())}, seed,
            {1.0})};
    };
    const std::vector<double> budgets{0.5, 2.0, 8.0};
    const auto a = budget_run(factory, task, budgets, c, 5, counting_clock(0.1));
    const auto b = budget_run(factory, task, budgets, c, 5, counting_clock(0.1));
    REQUIRE(a.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(a[i].steps == b[i].steps);
        CHECK(a[i].error == b[i].error);
        CHECK(a[i].elapsed >= budgets[i]);
        CHECK(!a[i].single_step);
    }
    CHECK(a[0].steps < a[1].steps);
    CHECK(a[1].steps < a[2].steps);
    CHECK(a[2].error <= a[0].error);

    const std::vector<double> one{1.0};
    CHECK(budget_run(factory, task, one, c, 5, counting_clock(0.1)).size() == 1);

    const std::vector<double> tiny{0.01};
    const auto t = budget_run(factory, task, tiny, c, 5, counting_clock(0.1));
    CHECK(t[0].steps == 1);
    CHECK(t[0].single_step);

    CHECK_THROWS_AS(budget_run(factory, task, std::vector<double>{}, c, 5), Error);
    CHECK_THROWS_AS(budget_run(factory, task, std::vector<double>{0.0}, c, 5), Error);
    CHECK_THROWS_AS(budget_run(factory, task, std::vector<double>{2.0, 1.0}, c, 5), Error);
}

TEST_CASE("parameter sweeps count instantiated parameters") {
    const RegressionTask task = small_task(4);
    training::TrainConfig c;
    c.epochs = 20;
    const auto d = static_cast<std::size_t>(task.x_train.cols());
    const auto n = static_cast<std::size_t>(task.y_train.cols());
    auto khronos_rank = [&](double knob, std::uint64_t seed) {
        return Model{khronos::KhronosModel::create({d, 3, static_cast<std::size_t>(knob), n}, seed, {1.0})};
    };
    const std::vector<double> two{2, 4};
    CHECK(param_sweep_run(khronos_rank, two, task, c, 1).size() == 2);
    const std::vector<double> ranks{1, 2, 3, 5, 8};
    const auto s = param_sweep_run(khronos_rank, ranks, task, c, 1);
    for (std::size_t i = 0; i < s.size(); ++i) {
        CHECK(s[i].params == khronos::param_count({d, 3, static_cast<std::size_t>(ranks[i]), n}));
        if (i > 0) CHECK(s[i].params > s[i - 1].params);
    }
    CHECK_THROWS_AS(param_sweep_run(khronos_rank, std::vector<double>{}, task, c, 1), Error);
}

TEST_CASE("inference timing is nonnegative") {
    int calls = 0;
    const double ms = time_per_sample_ms([&] { ++calls; }, 10, 5);
    CHECK(ms >= 0.0);
    CHECK(calls == 5);
}

}  // TEST_SUITE
