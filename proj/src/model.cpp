#include "kmf/model.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include "kmf/csv.hpp"
#include "kmf/error.hpp"

namespace kmf {

namespace {

constexpr const char* kFormat = "kmf-checkpoint";
constexpr int kVersion = 1;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

nlohmann::json norm_json(const NormStats& s) { return {{"min", s.min}, {"max", s.max}}; }

NormStats norm_from_json(const nlohmann::json& j, std::size_t n, const char* what) {
    NormStats s{j.at("min").get<std::vector<double>>(), j.at("max").get<std::vector<double>>()};
    if (s.min.size() != n || s.max.size() != n) {
        throw dimension_error(fmt::format("{} normalization has {} entries, expected {}", what, s.min.size(), n));
    }
    return s;
}

}  // namespace

Family parse_family(std::string_view name) {
    if (name == "khronos") return Family::khronos;
    if (name == "mlp") return Family::mlp;
    throw config_error(fmt::format("unknown model family '{}' (expected khronos or mlp)", name));
}

std::string_view family_name(Family f) { return f == Family::khronos ? "khronos" : "mlp"; }

Family family_of(const Model& m) { return m.index() == 0 ? Family::khronos : Family::mlp; }

std::size_t parameter_count(const Model& m) {
    return std::visit([](const auto& x) { return x.parameter_count(); }, m);
}

std::size_t input_dim(const Model& m) {
    return std::visit([](const auto& x) { return x.input_dim(); }, m);
}

std::size_t output_dim(const Model& m) {
    return std::visit([](const auto& x) { return x.output_dim(); }, m);
}

const NormStats& input_norm(const Model& m) {
    return std::visit([](const auto& x) -> const NormStats& { return x.input_norm; }, m);
}

const NormStats& output_norm(const Model& m) {
    return std::visit([](const auto& x) -> const NormStats& { return x.output_norm; }, m);
}

RowMatrix forward_batch(const Model& m, const RowMatrix& inputs) {
    return std::visit(overloaded{[&](const khronos::KhronosModel& x) { return khronos::forward_batch(x, inputs); },
                                 [&](const mlp::MlpModel& x) { return mlp::forward_batch(x, inputs); }},
                      m);
}

RowMatrix predict_batch(const Model& m, const RowMatrix& raw_inputs) {
    return std::visit(
        overloaded{[&](const khronos::KhronosModel& x) { return khronos::predict_batch(x, raw_inputs); },
                   [&](const mlp::MlpModel& x) { return mlp::predict_batch(x, raw_inputs); }},
        m);
}

std::string checkpoint_json(const Model& m) {
    nlohmann::json j;
    j["format"] = kFormat;
    j["version"] = kVersion;
    j["family"] = family_name(family_of(m));
    j["input_norm"] = norm_json(input_norm(m));
    j["output_norm"] = norm_json(output_norm(m));
    j["parameter_count"] = parameter_count(m);
    std::visit(overloaded{[&](const khronos::KhronosModel& x) {
                              j["config"] = {{"d", x.config.d}, {"k", x.config.k}, {"r", x.config.r},
                                             {"n_out", x.config.n_out}};
                              j["parameter_order"] = "alphas[i][s][j], gamma_raw[i], head[j][m], bias[m]";
                              const auto p = x.parameters();
                              j["parameters"] = std::vector<double>(p.begin(), p.end());
                          },
                          [&](const mlp::MlpModel& x) {
                              j["widths"] = x.widths();
                              auto layers = nlohmann::json::array();
                              for (std::size_t l = 0; l < x.layers(); ++l) {
                                  const auto w = x.weights(l);
                                  const auto b = x.bias(l);
                                  layers.push_back({{"fan_in", w.cols()},
                                                    {"fan_out", w.rows()},
                                                    {"weights", std::vector<double>(w.data(), w.data() + w.size())},
                                                    {"bias", std::vector<double>(b.data(), b.data() + b.size())}});
                              }
                              j["layers"] = std::move(layers);
                          }},
               m);
    return j.dump() + "\n";
}

Model model_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        if (j.at("format").get<std::string>() != kFormat) throw config_error("not a checkpoint document");
        const Family family = parse_family(j.at("family").get<std::string>());
        if (family == Family::khronos) {
            const auto& c = j.at("config");
            khronos::KernelConfig config{c.at("d").get<std::size_t>(), c.at("k").get<std::size_t>(),
                                         c.at("r").get<std::size_t>(), c.at("n_out").get<std::size_t>()};
            config.validate();
            khronos::KhronosModel model{config, khronos::KhronosParams(config), {}, {}};
            const auto values = j.at("parameters").get<std::vector<double>>();
            if (values.size() != model.parameter_count()) {
                throw dimension_error(fmt::format("checkpoint holds {} parameters, configuration needs {}",
                                                  values.size(), model.parameter_count()));
            }
            std::copy(values.begin(), values.end(), model.parameters().begin());
            model.input_norm = norm_from_json(j.at("input_norm"), config.d, "input");
            model.output_norm = norm_from_json(j.at("output_norm"), config.n_out, "output");
            return model;
        }
        mlp::MlpModel model(j.at("widths").get<std::vector<std::size_t>>());
        const auto& layers = j.at("layers");
        if (layers.size() != model.layers()) throw dimension_error("checkpoint layer count does not match widths");
        for (std::size_t l = 0; l < model.layers(); ++l) {
            const auto w = layers[l].at("weights").get<std::vector<double>>();
            const auto b = layers[l].at("bias").get<std::vector<double>>();
            auto mw = model.weights(l);
            auto mb = model.bias(l);
            if (w.size() != static_cast<std::size_t>(mw.size()) || b.size() != static_cast<std::size_t>(mb.size())) {
                throw dimension_error(fmt::format("checkpoint layer {} has the wrong shape", l));
            }
            std::copy(w.begin(), w.end(), mw.data());
            std::copy(b.begin(), b.end(), mb.data());
        }
        model.input_norm = norm_from_json(j.at("input_norm"), model.input_dim(), "input");
        model.output_norm = norm_from_json(j.at("output_norm"), model.output_dim(), "output");
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, fmt::format("invalid checkpoint JSON: {}", e.what()));
    }
}

void save_checkpoint(const std::string& path, const Model& m) { csv::write_file(path, checkpoint_json(m)); }

Model load_checkpoint(const std::string& path) { return model_from_json(csv::read_file(path)); }

}  // namespace kmf
