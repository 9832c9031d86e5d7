#include <doctest.h>

#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cli.hpp"
#include "kmf/csv.hpp"
#include "kmf/evalharness.hpp"
#include "kmf/mfpipe.hpp"
#include "kmf/model.hpp"
#include "support.hpp"

using namespace kmf;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
    int code = 0;
    std::string out;
    std::string err;
};

Run kmf_run(std::vector<std::string> args) {
    args.insert(args.begin(), "kmf");
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::map<std::string, std::string> snapshot(const std::string& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = test::slurp(e.path().string());
    }
    return files;
}

double printed(const std::string& text, const std::string& key) {
    std::istringstream in(text);
    std::string k;
    double v = 0.0;
    while (in >> k) {
        if (k == key && in >> v) return v;
    }
    FAIL("no '" << key << "' in output:\n" << text);
    return 0.0;
}

std::vector<double> column(const csv::Table& t, const std::string& name, const std::string& model = "") {
    const std::size_t c = t.require(name);
    const auto m = t.column("model");
    std::vector<double> v;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (!model.empty() && t.rows[r][*m] != model) continue;
        v.push_back(t.number(r, c));
    }
    return v;
}

const std::vector<std::string> kFast{"--epochs", "40", "--delta-epochs", "40"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("synth writes a deterministic dataset") {
    test::TempDir tmp;
    const Run a = kmf_run({"synth", "--n", "100", "--bias", "none", "--seed", "3", "--out", tmp / "a"});
    REQUIRE_MESSAGE(a.code == 0, a.err);
    const auto files = snapshot(tmp / "a");
    std::size_t n_csv = 0;
    for (const auto& [name, _] : files) n_csv += name.ends_with(".csv");
    CHECK(n_csv == 100);
    const json m = json::parse(files.at("manifest.json"));
    CHECK(m.at("cases").size() == 100);
    for (const auto& c : m.at("cases")) CHECK(c.at("has_hf").get<bool>());
    const json run = json::parse(files.at("run_manifest.json"));
    CHECK(run.at("seed").get<std::uint64_t>() == 3);

    REQUIRE(kmf_run({"synth", "--n", "100", "--bias", "none", "--seed", "3", "--out", tmp / "b"}).code == 0);
    CHECK(snapshot(tmp / "b") == files);

    const Run zero = kmf_run({"synth", "--n", "0", "--out", tmp / "c"});
    CHECK(zero.code == cli::exit_config);
    CHECK(json::parse(zero.err).at("error").at("kind") == "config");
}

TEST_CASE("usage errors map to the configuration exit code") {
    CHECK(kmf_run({"train"}).code == cli::exit_config);
    CHECK(kmf_run({"bogus"}).code == cli::exit_config);
    CHECK(kmf_run({"--help"}).code == cli::exit_ok);
}

TEST_CASE("fit-geom on NACA samples") {
    test::TempDir tmp;
    REQUIRE(kmf_run({"naca", "0012", "--points", "201", "--out", tmp / "n.csv"}).code == 0);
    const Run fit = kmf_run({"fit-geom", tmp / "n.csv", "--out", tmp / "fit"});
    REQUIRE_MESSAGE(fit.code == 0, fit.err);
    CHECK(printed(fit.out, "rmse") <= 0.0073);
    CHECK(fs::exists(tmp / "fit/curve.json"));
    CHECK(fs::exists(tmp / "fit/run_manifest.json"));

    const Run refit = kmf_run({"fit-geom", tmp / "fit/reconstruction.csv"});
    REQUIRE_MESSAGE(refit.code == 0, refit.err);
    CHECK(printed(refit.out, "rmse") <= 1e-9);

    test::spit(tmp / "three.csv", "x,y,side\n1,0,upper\n0,0,upper\n0.5,-0.05,lower\n");
    CHECK(kmf_run({"fit-geom", tmp / "three.csv", "--n-ctrl", "16"}).code == cli::exit_config);

    test::spit(tmp / "bad.csv", "x,y,side\n1,0,upper\n0.5,oops,upper\n");
    const Run bad = kmf_run({"fit-geom", tmp / "bad.csv"});
    CHECK(bad.code == cli::exit_data);
    CHECK(json::parse(bad.err).at("error").at("line") == 3);
}

TEST_CASE("train writes one checkpoint per trained stage") {
    test::TempDir tmp;
    REQUIRE(kmf_run({"synth", "--n", "40", "--bias", "suction-damped", "--out", tmp / "data"}).code == 0);
    const auto before = snapshot(tmp / "data");

    const Run c1 = kmf_run(with({"train", tmp / "data", "--case", "1", "--delta-rank", "3", "--out", tmp / "c1"}, kFast));
    REQUIRE_MESSAGE(c1.code == 0, c1.err);
    CHECK(fs::exists(tmp / "c1/lf.ckpt.json"));
    CHECK(!fs::exists(tmp / "c1/delta.ckpt.json"));
    CHECK(c1.err.find("warning") != std::string::npos);

    const Run c3 = kmf_run(with({"train", tmp / "data", "--case", "3", "--out", tmp / "c3"}, kFast));
    REQUIRE_MESSAGE(c3.code == 0, c3.err);
    CHECK(fs::exists(tmp / "c3/lf.ckpt.json"));
    CHECK(fs::exists(tmp / "c3/delta.ckpt.json"));

    REQUIRE(kmf_run(with({"train", tmp / "data", "--case", "3", "--out", tmp / "c3b"}, kFast)).code == 0);
    const json s1 = json::parse(test::slurp(tmp / "c3/summary.json"));
    const json s2 = json::parse(test::slurp(tmp / "c3b/summary.json"));
    CHECK(s1.at("lf").at("final_loss") == s2.at("lf").at("final_loss"));
    CHECK(s1.at("delta").at("final_loss") == s2.at("delta").at("final_loss"));
    CHECK(test::slurp(tmp / "c3/lf.ckpt.json") == test::slurp(tmp / "c3b/lf.ckpt.json"));

    const Run mlp = kmf_run({"train", tmp / "data", "--case", "2", "--model", "mlp", "--hidden", "16,16", "--epochs",
                             "20", "--delta-hidden", "8", "--delta-epochs", "20", "--out", tmp / "m2"});
    REQUIRE_MESSAGE(mlp.code == 0, mlp.err);
    CHECK(family_of(load_checkpoint(tmp / "m2/delta.ckpt.json")) == Family::mlp);

    CHECK(snapshot(tmp / "data") == before);
}

TEST_CASE("config files supply command options") {
    test::TempDir tmp;
    test::spit(tmp / "run.ini", "seed = 9\n[synth]\nn = 12\nbias = offset\n");
    const Run r = kmf_run({"--config", tmp / "run.ini", "synth", "--out", tmp / "d"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto d = mfpipe::read_dataset(tmp / "d");
    CHECK(d.size() == 12);
    CHECK(d.bias_profile == "offset");
    CHECK(d.seed == 9);
}

TEST_CASE("eval of a perfect surrogate scores one") {
    test::TempDir tmp;
    mfpipe::Dataset d = mfpipe::synth_benchmark(30, 4);
    test::Gen g(111);
    const std::vector<double> profile = g.vec(d.n_stations(), -2, 1);
    for (auto& c : d.cases) {
        c.cp_lf = profile;
        c.cp_hf = profile;
    }
    mfpipe::write_dataset(tmp / "data", d);
    const auto before = snapshot(tmp / "data");

    // zero atoms leave only the bias
    auto k = khronos::KhronosModel::create({d.n_features() + 2, 3, 2, d.n_stations()}, 1);
    std::fill(k.params.alphas().begin(), k.params.alphas().end(), 0.0);
    std::copy(profile.begin(), profile.end(), k.params.bias().begin());
    fs::create_directories(tmp / "ckpt");
    save_checkpoint(tmp / "ckpt/lf.ckpt.json", Model{k});

    const Run r = kmf_run({"eval", tmp / "data", "--checkpoints", tmp / "ckpt", "--out", tmp / "ev"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const json s = json::parse(test::slurp(tmp / "ev/summary.json"));
    const auto& lf = s.at("models").at(0);
    CHECK(lf.at("r2").get<double>() == doctest::Approx(1.0).epsilon(1e-12));
    const auto recs = csv::parse(test::slurp(tmp / "ev/records.csv"));
    CHECK(recs.rows.size() == 5);
    for (double v : column(recs, "r2")) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(snapshot(tmp / "data") == before);

    mfpipe::Dataset fewer = mfpipe::synth_benchmark(30, 4, {.n_stations = 41});
    mfpipe::write_dataset(tmp / "fewer", fewer);
    CHECK(kmf_run({"eval", tmp / "fewer", "--checkpoints", tmp / "ckpt", "--out", tmp / "ev2"}).code ==
          cli::exit_data);
}

TEST_CASE("eval summaries agree with the per-fold rows") {
    test::TempDir tmp;
    REQUIRE(kmf_run({"synth", "--n", "30", "--bias", "offset", "--out", tmp / "data"}).code == 0);
    const auto before = snapshot(tmp / "data");
    const auto args = with({"eval", tmp / "data", "--case", "3"}, kFast);
    const Run r = kmf_run(with(args, {"--jobs", "1", "--out", tmp / "ev"}));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto recs = csv::parse(test::slurp(tmp / "ev/records.csv"));
    const json s = json::parse(test::slurp(tmp / "ev/summary.json"));
    const auto cases = csv::parse(test::slurp(tmp / "ev/case_r2.csv"));
    for (const auto& m : s.at("models")) {
        const std::string name = m.at("model");
        const auto r2 = column(recs, "r2", name);
        REQUIRE(r2.size() == 5);
        double mean = 0.0;
        for (double v : r2) mean += v;
        mean /= 5.0;
        CHECK(m.at("r2").get<double>() == doctest::Approx(mean).epsilon(1e-12));
        std::size_t binned = 0;
        for (const auto& c : m.at("r2_bins").at("counts")) binned += c.get<std::size_t>();
        CHECK(binned == column(cases, "r2", name).size());
        CHECK(binned == 30);
    }
    const Run r2 = kmf_run(with(args, {"--jobs", "2", "--out", tmp / "ev2"}));
    REQUIRE(r2.code == 0);
    CHECK(column(csv::parse(test::slurp(tmp / "ev2/records.csv")), "r2") == column(recs, "r2"));
    CHECK(snapshot(tmp / "data") == before);
}

TEST_CASE("benchmark curves") {
    test::TempDir tmp;
    REQUIRE(kmf_run({"synth", "--n", "30", "--out", tmp / "data"}).code == 0);
    const auto before = snapshot(tmp / "data");
    const std::vector<std::string> common{"--epochs", "200", "--hidden", "16,16", "--step-seconds", "0.5"};
    const Run b = kmf_run(with({"benchmark", tmp / "data", "--budgets", "5,15,60", "--out", tmp / "b1"}, common));
    REQUIRE_MESSAGE(b.code == 0, b.err);
    const auto curve = csv::parse(test::slurp(tmp / "b1/budget_curve.csv"));
    CHECK(column(curve, "budget", "khronos") == std::vector<double>{5, 15, 60});
    CHECK(column(curve, "budget", "mlp") == std::vector<double>{5, 15, 60});

    REQUIRE(kmf_run(with({"benchmark", tmp / "data", "--budgets", "5,15,60", "--out", tmp / "b2"}, common)).code == 0);
    CHECK(column(csv::parse(test::slurp(tmp / "b2/budget_curve.csv")), "error") == column(curve, "error"));

    const Run s = kmf_run({"benchmark", tmp / "data", "--ranks", "1,2,4,8", "--epochs", "20", "--out", tmp / "s"});
    REQUIRE_MESSAGE(s.code == 0, s.err);
    const auto sweep = csv::parse(test::slurp(tmp / "s/param_curve.csv"));
    const auto params = column(sweep, "params", "khronos");
    REQUIRE(params.size() == 4);
    for (std::size_t i = 1; i < 4; ++i) CHECK(params[i] > params[i - 1]);

    CHECK(kmf_run({"benchmark", tmp / "data", "--out", tmp / "none"}).code == cli::exit_config);
    CHECK(kmf_run({"benchmark", tmp / "data", "--budgets", "15,5", "--out", tmp / "bad"}).code == cli::exit_config);
    CHECK(snapshot(tmp / "data") == before);
}

}  // TEST_SUITE
