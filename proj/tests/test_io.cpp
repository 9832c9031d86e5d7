#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include <json.hpp>

#include "kmf/csv.hpp"
#include "kmf/error.hpp"
#include "kmf/model.hpp"
#include "support.hpp"

using namespace kmf;

namespace {

template <class M>
void randomize_norms(M& m, test::Gen& g) {
    for (auto* n : {&m.input_norm, &m.output_norm}) {
        for (std::size_t j = 0; j < n->size(); ++j) {
            n->min[j] = g.uniform(-3, 0);
            n->max[j] = n->min[j] + g.uniform(0.1, 4);
        }
    }
}

std::vector<double> flat(const Model& m) {
    return std::visit([](const auto& x) {
        const auto p = x.parameters();
        return std::vector<double>(p.begin(), p.end());
    }, m);
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("shortest doubles round trip exactly") {
    test::Gen g(101);
    for (int t = 0; t < 5000; ++t) {
        const double v = g.normal() * std::pow(10.0, g.uniform(-300, 300));
        CHECK(*csv::to_double(csv::format_double(v)) == v);
    }
    CHECK(*csv::to_double(csv::format_double(0.1)) == 0.1);
    CHECK(csv::format_double(0.5) == "0.5");
    CHECK(!csv::to_double("1.5x"));
    CHECK(!csv::to_double(""));
}

TEST_CASE("csv parsing") {
    const auto t = csv::parse("# note\na,b\n1,2\n\n3,4\n");
    CHECK(t.header == std::vector<std::string>{"a", "b"});
    REQUIRE(t.rows.size() == 2);
    CHECK(t.lines == std::vector<std::size_t>{3, 5});
    CHECK(t.number(1, *t.column("b")) == 4.0);
    CHECK(!t.column("c"));
    CHECK_THROWS_AS(t.require("c"), ParseError);
    try {
        csv::parse("a,b\n1,2\n3\n");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }
    const auto bad = csv::parse("a\nnan\n");
    CHECK_THROWS_AS(bad.number(0, 0), ParseError);
    CHECK_THROWS_AS(csv::read("/nonexistent/file.csv"), Error);
}

TEST_CASE("checkpoints round trip bit-exactly") {
    test::Gen g(102);
    test::TempDir dir;
    for (int t = 0; t < 20; ++t) {
        Model m;
        if (t % 2 == 0) {
            auto k = khronos::KhronosModel::create({g.index(1, 6), g.index(1, 5), g.index(1, 5), g.index(1, 9)},
                                                   g.index(0, 999), {1.0});
            for (double& v : k.parameters()) v = g.normal() * std::pow(10.0, g.uniform(-8, 3));
            randomize_norms(k, g);
            m = k;
        } else {
            auto p = mlp::MlpModel::create({g.index(1, 6), g.index(1, 9), g.index(1, 7)}, g.index(0, 999));
            for (double& v : p.parameters()) v = g.normal() * std::pow(10.0, g.uniform(-8, 3));
            randomize_norms(p, g);
            m = p;
        }
        const std::string path = dir / "m.json";
        save_checkpoint(path, m);
        const Model back = load_checkpoint(path);
        CHECK(family_of(back) == family_of(m));
        CHECK(flat(back) == flat(m));
        CHECK(input_norm(back).min == input_norm(m).min);
        CHECK(output_norm(back).max == output_norm(m).max);
        CHECK(checkpoint_json(back) == checkpoint_json(m));
        const RowMatrix x = g.matrix(4, input_dim(m), -1, 2);
        CHECK(predict_batch(back, x) == predict_batch(m, x));
    }
}

TEST_CASE("malformed checkpoints are rejected") {
    CHECK_THROWS_AS(model_from_json("{not json"), ParseError);
    CHECK_THROWS_AS(model_from_json("{\"format\": \"other\"}"), Error);
    auto doc = nlohmann::json::parse(checkpoint_json(Model{khronos::KhronosModel::create({2, 3, 2, 2}, 1)}));
    doc["parameters"].erase(0);
    CHECK_THROWS_AS(model_from_json(doc.dump()), Error);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.json"), Error);
}

}  // TEST_SUITE
