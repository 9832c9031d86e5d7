#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>

#include "kmf/csv.hpp"
#include "kmf/error.hpp"
#include "kmf/evalharness.hpp"
#include "kmf/fields.hpp"
#include "kmf/geometry.hpp"
#include "kmf/mfpipe.hpp"
#include "kmf/model.hpp"
#include "kmf/parallel.hpp"

namespace kmf::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
    std::uint64_t seed = 0;
    int jobs = 0;
};

// Optional hyperparameter overrides shared by train, eval and benchmark.
struct StageFlags {
    std::optional<std::size_t> epochs;
    std::optional<double> lr;
    std::optional<std::size_t> rank;
    std::optional<std::size_t> elements;
    std::vector<std::size_t> hidden;
    std::optional<std::size_t> batch;

    bool any() const { return epochs || lr || rank || elements || !hidden.empty() || batch; }

    void apply(mfpipe::ModelSpec& spec) const {
        if (epochs) spec.train.epochs = *epochs;
        if (lr) spec.train.peak_lr = *lr;
        if (rank) spec.r = *rank;
        if (elements) spec.k = *elements;
        if (!hidden.empty()) spec.hidden = hidden;
        if (batch) spec.train.batch_size = *batch;
    }
};

struct ModelFlags {
    std::string family = "khronos";
    int case_id = 1;
    std::optional<double> hf_ratio;
    StageFlags lf;
    StageFlags delta;
    bool mix_hf = false;
    std::optional<double> w_hf;

    double ratio() const { return hf_ratio ? *hf_ratio : mfpipe::case_hf_ratio(case_id); }

    mfpipe::PipelineConfig pipeline(std::uint64_t seed) const {
        const Family f = parse_family(family);
        mfpipe::PipelineConfig pc;
        pc.lf = mfpipe::default_lf_spec(f);
        pc.delta = mfpipe::default_delta_spec(f);
        lf.apply(pc.lf);
        delta.apply(pc.delta);
        pc.lf.train.seed = seed;
        pc.delta.train.seed = seed + 1;
        if (w_hf) pc.lf.train.w_hf = *w_hf;
        pc.mix_hf_into_lf = mix_hf;
        return pc;
    }
};

void add_stage_flags(CLI::App* app, StageFlags& s, const std::string& prefix, const std::string& what) {
    app->add_option("--" + prefix + "epochs", s.epochs, what + " epochs");
    app->add_option("--" + prefix + "lr", s.lr, what + " peak learning rate");
    app->add_option("--" + prefix + "rank", s.rank, what + " KHRONOS rank r");
    app->add_option("--" + prefix + "elements", s.elements, what + " KHRONOS grid points per dimension k");
    app->add_option("--" + prefix + "hidden", s.hidden, what + " MLP hidden widths, comma separated")->delimiter(',');
    app->add_option("--" + prefix + "batch", s.batch, what + " minibatch size (0 = full batch)");
}

void add_model_flags(CLI::App* app, ModelFlags& m) {
    app->add_option("--model", m.family, "Model family")->check(CLI::IsMember({"khronos", "mlp"}));
    app->add_option("--case", m.case_id, "Training case: 1, 2 or 3 (HF ratio 0, 0.1, 0.3)")->check(CLI::Range(1, 3));
    app->add_option("--hf-ratio", m.hf_ratio, "HF ratio overriding --case")->check(CLI::Range(0.0, 1.0));
    add_stage_flags(app, m.lf, "", "LF model");
    add_stage_flags(app, m.delta, "delta-", "Delta model");
    app->add_flag("--mix-hf", m.mix_hf, "Add HF train cases to the LF training set with weight --w-hf");
    app->add_option("--w-hf", m.w_hf, "Loss weight of HF samples in the LF set");
}

std::string option_value(const CLI::Option* o) {
    if (o->count() == 0) return o->get_default_str();
    if (o->get_expected_max() == 0) return "true";
    std::string v;
    for (const auto& r : o->results()) v += (v.empty() ? "" : ",") + r;
    return v;
}

// Resolved options of the subcommand. Output location and config path are left out so
// identical runs into different directories produce identical manifests.
json resolved_options(const CLI::App* sub) {
    json opts = json::object();
    for (const CLI::Option* o : sub->get_options()) {
        const std::string name = o->get_single_name();
        if (name == "help" || name == "out" || name == "config") continue;
        opts[name] = option_value(o);
    }
    return opts;
}

void write_run_manifest(const std::string& dir, const CLI::App* sub, const Globals& g) {
    json j{{"format", "kmf-run"},
           {"version", 1},
           {"command", sub->get_name()},
           {"seed", g.seed},
           {"options", resolved_options(sub)}};
    csv::write_file((fs::path(dir) / "run_manifest.json").string(), j.dump(2) + "\n");
}

std::string loss_csv(const training::TrainResult& r) {
    std::string s = "epoch,loss,lr\n";
    for (const auto& e : r.history) s += fmt::format("{},{},{}\n", e.epoch, e.loss, e.lr);
    return s;
}

json history_json(const training::TrainResult& r, const Model& m) {
    return {{"params", parameter_count(m)},
            {"epochs", r.history.size()},
            {"steps", r.steps},
            {"initial_loss", r.history.empty() ? 0.0 : r.history.front().loss},
            {"final_loss", r.history.empty() ? 0.0 : r.history.back().loss},
            {"seconds", r.seconds}};
}

json records_json(const std::vector<eval::EvalRecord>& records) {
    json j = json::object();
    for (const auto& r : records) {
        j[r.model] = {{"r2", r.r2}, {"r2_case_mean", r.r2_case_mean}, {"nrmse", r.nrmse}, {"params", r.params}};
    }
    return j;
}

std::string case_r2_csv(const mfpipe::Dataset& data, const eval::FoldPlan& plan,
                        const std::vector<eval::EvalRecord>& records) {
    std::string s = "model,fold,case,r2\n";
    for (const auto& r : records) {
        const auto rows = plan.test(r.fold);
        for (std::size_t i = 0; i < r.case_r2.size() && i < rows.size(); ++i) {
            s += fmt::format("{},{},{},{}\n", r.model, r.fold, data.cases[rows[i]].name, r.case_r2[i]);
        }
    }
    return s;
}

std::vector<std::string> csv_files(const std::string& dir) {
    if (!fs::is_directory(dir)) throw io_error(fmt::format("'{}' is not a directory", dir));
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    return files;
}

fields::AirfoilCase load_case(const std::string& path, const std::map<std::string, fields::CaseMeta>* meta,
                              const std::string& internal_dir) {
    fields::AirfoilCase c = fields::read_surface_case(path, fields::case_meta(path, meta));
    if (!internal_dir.empty()) {
        const fs::path ip = fs::path(internal_dir) / fs::path(path).filename();
        if (fs::exists(ip)) fields::read_internal_field(ip.string(), c);
    }
    return c;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct SynthArgs {
    std::size_t n = 0;
    std::string bias = "none";
    std::string layout = "y-only";
    std::size_t stations = mfpipe::kStations;
    double offset = 0.2;
    double damping = 0.35;
    double test_fraction = 0.2;
    std::string out;
};

void cmd_synth(const SynthArgs& a, const Globals& g, const CLI::App* sub, std::ostream& out) {
    if (a.n == 0) throw config_error("--n must be at least 1");
    mfpipe::SynthOptions o;
    o.n_stations = a.stations;
    o.bias = mfpipe::parse_bias(a.bias);
    o.layout = geometry::parse_layout(a.layout);
    o.offset = a.offset;
    o.suction_damping = a.damping;
    const mfpipe::Dataset data = mfpipe::synth_benchmark(a.n, g.seed, o);
    mfpipe::write_dataset(a.out, data, a.test_fraction);
    write_run_manifest(a.out, sub, g);
    fmt::print(out, "wrote {} cases ({} stations, {} features, bias {}) to {}\n", data.size(), data.n_stations(),
               data.n_features(), a.bias, a.out);
}

struct NacaArgs {
    std::string digits;
    std::size_t points = 201;
    bool closed_te = false;
    std::string out;
};

void cmd_naca(const NacaArgs& a, std::ostream& out) {
    const geometry::SurfacePoints s = geometry::naca4(a.digits, a.points, a.closed_te);
    std::string text = "x,y,side\n";
    for (const auto& p : s.upper) text += fmt::format("{},{},upper\n", p.x, p.y);
    for (const auto& p : s.lower) text += fmt::format("{},{},lower\n", p.x, p.y);
    csv::write_file(a.out, text);
    fmt::print(out, "wrote NACA {} ({} points per side) to {}\n", a.digits, a.points, a.out);
}

struct FitArgs {
    std::string input;
    std::size_t n_ctrl = 16;
    bool by_sign = false;
    std::string layout = "xy-flat";
    std::string out;
};

void cmd_fit_geom(const FitArgs& a, const Globals& g, const CLI::App* sub, std::ostream& out) {
    geometry::FitOptions opts;
    opts.n_ctrl = a.n_ctrl;
    const geometry::SurfaceTable table = geometry::read_surface_csv(a.input);
    const geometry::SurfacePoints surface = geometry::surface_from_table(table, a.by_sign, &opts);
    const geometry::FitResult fit = geometry::fit_bspline_lsq(surface, opts);
    fmt::print(out, "rmse {}\ncondition {}\npoints {}\n", fit.report.rmse, fit.report.condition,
               fit.report.residuals.size());
    if (a.out.empty()) return;
    const fs::path dir(a.out);
    csv::write_file((dir / "curve.json").string(), geometry::curve_to_json(fit.curve));
    geometry::write_fit_report_csv((dir / "fit_report.csv").string(), fit.report);
    geometry::write_surface_csv((dir / "reconstruction.csv").string(), fit.curve, fit.report.zeta_upper,
                                fit.report.zeta_lower);
    const auto layout = geometry::parse_layout(a.layout);
    json feats{{"layout", geometry::layout_name(layout)}, {"features", geometry::geometry_features(fit.curve, layout)}};
    csv::write_file((dir / "features.json").string(), feats.dump(2) + "\n");
    write_run_manifest(a.out, sub, g);
}

struct ProcessArgs {
    std::string input;
    std::string internal;
    std::string meta;
    std::optional<double> U;
    std::optional<double> aoa;
    std::size_t stations = mfpipe::kStations;
    fields::BandOptions band;
    std::string out;
};

void cmd_process_case(const ProcessArgs& a, std::ostream& out) {
    fields::CaseMeta m;
    if (a.U && a.aoa) {
        m = {*a.U, *a.aoa};
    } else {
        std::map<std::string, fields::CaseMeta> table;
        if (!a.meta.empty()) table = fields::read_meta_csv(a.meta);
        m = fields::case_meta(a.input, a.meta.empty() ? nullptr : &table);
        if (a.U) m.U = *a.U;
        if (a.aoa) m.aoa = *a.aoa;
    }
    fields::AirfoilCase c = fields::read_surface_case(a.input, m);
    if (!a.internal.empty()) fields::read_internal_field(a.internal, c);
    const auto stations = mfpipe::cosine_stations(a.stations);
    const std::string text = fields::processed_case_json(fields::process_case(c, stations, a.band), stations);
    if (a.out.empty()) {
        out << text;
    } else {
        csv::write_file(a.out, text);
        fmt::print(out, "wrote {}\n", a.out);
    }
}

struct IngestArgs {
    std::string lf_dir;
    std::string hf_dir;
    std::string internal_dir;
    std::string meta;
    std::size_t n_ctrl = 16;
    std::string layout = "y-only";
    bool by_sign = false;
    std::size_t stations = mfpipe::kStations;
    double test_fraction = 0.2;
    std::string out;
};

void cmd_ingest(const IngestArgs& a, const Globals& g, const CLI::App* sub, std::ostream& out) {
    std::map<std::string, fields::CaseMeta> meta;
    if (!a.meta.empty()) meta = fields::read_meta_csv(a.meta);
    const auto* meta_ptr = a.meta.empty() ? nullptr : &meta;
    const auto files = csv_files(a.lf_dir);
    if (files.empty()) throw io_error(fmt::format("no .csv cases in '{}'", a.lf_dir));

    mfpipe::Dataset data;
    data.stations = mfpipe::cosine_stations(a.stations);
    data.layout = geometry::parse_layout(a.layout);
    data.bias_profile = "external";
    data.seed = g.seed;
    data.cases.resize(files.size());

    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic) num_threads(std::max(g.jobs, 1))
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(files.size()); ++i) {
        const std::string& path = files[static_cast<std::size_t>(i)];
        try {
            geometry::FitOptions opts;
            opts.n_ctrl = a.n_ctrl;
            const auto table = geometry::read_surface_csv(path);
            const auto fit = geometry::fit_bspline_lsq(geometry::surface_from_table(table, a.by_sign, &opts), opts);

            const fields::AirfoilCase lf = load_case(path, meta_ptr, "");
            mfpipe::CaseRecord rec;
            rec.name = fs::path(path).stem().string();
            rec.features = geometry::geometry_features(fit.curve, data.layout);
            rec.U = lf.U;
            rec.aoa = lf.aoa;
            rec.cp_lf = fields::process_case(lf, data.stations).station_cp;
            if (!a.hf_dir.empty()) {
                const fs::path hp = fs::path(a.hf_dir) / fs::path(path).filename();
                if (fs::exists(hp)) {
                    const fields::AirfoilCase hf = load_case(hp.string(), meta_ptr, a.internal_dir);
                    rec.cp_hf = fields::process_case(hf, data.stations).station_cp;
                }
            }
            data.cases[static_cast<std::size_t>(i)] = std::move(rec);
        } catch (const Error& e) {
#pragma omp critical(kmf_ingest_failure)
            if (!failure) {
                failure = std::make_exception_ptr(Error(e.kind(), e.code(), fmt::format("{}: {}", path, e.what())));
            }
        } catch (...) {
#pragma omp critical(kmf_ingest_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);

    mfpipe::write_dataset(a.out, data, a.test_fraction);
    write_run_manifest(a.out, sub, g);
    const auto n_hf = std::count_if(data.cases.begin(), data.cases.end(), [](const auto& c) { return c.cp_hf.has_value(); });
    fmt::print(out, "ingested {} cases ({} with HF) into {}\n", data.size(), n_hf, a.out);
}

struct TrainArgs {
    std::string dataset;
    ModelFlags model;
    std::string out;
};

void cmd_train(const TrainArgs& a, const Globals& g, const CLI::App* sub, std::ostream& out, std::ostream& err) {
    const mfpipe::Dataset data = mfpipe::read_dataset(a.dataset);
    const double ratio = a.model.ratio();
    if (ratio == 0.0 && a.model.delta.any()) {
        fmt::print(err, "warning: case 1 has no delta model; delta options are ignored\n");
    }
    const mfpipe::PipelineConfig pc = a.model.pipeline(g.seed);
    const mfpipe::MfDataset split = mfpipe::build_cases(data, ratio, data.seed);
    const mfpipe::PipelineResult res = mfpipe::train_pipeline(data, split, pc, g.seed);

    const fs::path dir(a.out);
    save_checkpoint((dir / "lf.ckpt.json").string(), res.surrogate.lf);
    csv::write_file((dir / "lf_loss.csv").string(), loss_csv(res.lf_history));
    json summary{{"model", a.model.family},
                 {"hf_ratio", ratio},
                 {"seed", g.seed},
                 {"split_seed", data.seed},
                 {"n_train", split.train.size()},
                 {"n_test", split.test.size()},
                 {"n_hf", split.hf.size()},
                 {"lf", history_json(res.lf_history, res.surrogate.lf)},
                 {"delta", nullptr}};
    if (a.model.hf_ratio) {
        summary["case"] = nullptr;
    } else {
        summary["case"] = a.model.case_id;
    }
    if (res.surrogate.delta) {
        save_checkpoint((dir / "delta.ckpt.json").string(), *res.surrogate.delta);
        csv::write_file((dir / "delta_loss.csv").string(), loss_csv(*res.delta_history));
        summary["delta"] = history_json(*res.delta_history, *res.surrogate.delta);
    }
    summary["test"] = records_json(eval::score_surrogate(data, res.surrogate, split.test, "", 0));
    csv::write_file((dir / "summary.json").string(), summary.dump(2) + "\n");
    write_run_manifest(a.out, sub, g);

    fmt::print(out, "lf: {} params, loss {} -> {}\n", parameter_count(res.surrogate.lf),
               summary["lf"]["initial_loss"].get<double>(), summary["lf"]["final_loss"].get<double>());
    if (res.surrogate.delta) {
        fmt::print(out, "delta: {} params, loss {} -> {}\n", parameter_count(*res.surrogate.delta),
                   summary["delta"]["initial_loss"].get<double>(), summary["delta"]["final_loss"].get<double>());
    }
    for (const auto& [name, rec] : summary["test"].items()) {
        fmt::print(out, "test {} r2 {}\n", name, rec["r2"].get<double>());
    }
}

struct EvalArgs {
    std::string dataset;
    ModelFlags model;
    std::size_t k = 5;
    std::string checkpoints;
    std::string out;
};

void cmd_eval(const EvalArgs& a, const Globals& g, const CLI::App* sub, std::ostream& out) {
    const mfpipe::Dataset data = mfpipe::read_dataset(a.dataset);
    const eval::FoldPlan plan = eval::kfold_plan(data.size(), a.k, g.seed);
    std::vector<eval::EvalRecord> records;
    if (a.checkpoints.empty()) {
        records = eval::kfold_evaluate(data, plan, a.model.pipeline(g.seed), a.model.ratio(), g.seed, g.jobs);
    } else {
        const fs::path dir(a.checkpoints);
        mfpipe::MfSurrogate s{load_checkpoint((dir / "lf.ckpt.json").string()), std::nullopt};
        if (fs::exists(dir / "delta.ckpt.json")) s.delta = load_checkpoint((dir / "delta.ckpt.json").string());
        if (output_dim(s.lf) != data.n_stations()) {
            throw dimension_error(fmt::format("checkpoint predicts {} stations, dataset has {}", output_dim(s.lf),
                                              data.n_stations()));
        }
        if (input_dim(s.lf) != data.n_features() + 2) {
            throw dimension_error(fmt::format("checkpoint expects {} inputs, dataset provides {}", input_dim(s.lf),
                                              data.n_features() + 2));
        }
        const std::string prefix = fmt::format("{}-", family_name(family_of(s.lf)));
        for (std::size_t f = 0; f < plan.k; ++f) {
            const auto rows = plan.test(f);
            auto r = eval::score_surrogate(data, s, rows, prefix, f);
            records.insert(records.end(), r.begin(), r.end());
        }
    }
    const auto summaries = eval::aggregate(records);
    const fs::path dir(a.out);
    csv::write_file((dir / "records.csv").string(), eval::records_csv(records));
    csv::write_file((dir / "case_r2.csv").string(), case_r2_csv(data, plan, records));
    csv::write_file((dir / "summary.json").string(), eval::summary_json(summaries));
    write_run_manifest(a.out, sub, g);
    for (const auto& s : summaries) {
        fmt::print(out, "{}: r2 {:.4f} (case mean {:.4f}), nrmse {:.4f}, params {:.0f}, bins {}/{}/{}/{}\n", s.model,
                   s.r2, s.r2_case_mean, s.nrmse, s.params, s.bins.counts[0], s.bins.counts[1], s.bins.counts[2],
                   s.bins.counts[3]);
    }
}

struct BenchArgs {
    std::string dataset;
    ModelFlags model;
    std::vector<std::string> families{"khronos", "mlp"};
    std::vector<double> budgets;
    std::vector<double> ranks;
    std::vector<double> widths;
    std::size_t depth = 4;
    std::string target = "lf";
    double step_seconds = 0.0;
    std::string out;
};

// Deterministic stand-in for the wall clock: every query advances by a fixed step.
eval::Clock counting_clock(double step) {
    return [t = 0.0, step]() mutable {
        t += step;
        return t;
    };
}

void cmd_benchmark(const BenchArgs& a, const Globals& g, const CLI::App* sub, std::ostream& out) {
    if (a.budgets.empty() && a.ranks.empty() && a.widths.empty()) {
        throw config_error("nothing to run: give --budgets, --ranks and/or --widths");
    }
    const mfpipe::Dataset data = mfpipe::read_dataset(a.dataset);
    const mfpipe::MfDataset split = mfpipe::build_cases(data, a.model.ratio(), data.seed);
    if (a.target != "lf" && a.target != "hf") throw config_error("--target must be lf or hf");
    const eval::RegressionTask task = eval::lf_task(data, split, a.target == "hf");
    const std::size_t d_in = data.n_features() + 2;
    const std::size_t n_out = data.n_stations();
    const fs::path dir(a.out);

    if (!a.budgets.empty()) {
        std::string text = "model,budget,elapsed,steps,error,single_step\n";
        for (const auto& fam : a.families) {
            ModelFlags mf = a.model;
            mf.family = fam;
            const mfpipe::ModelSpec spec = mf.pipeline(g.seed).lf;
            const eval::ModelFactory factory = [&](std::uint64_t s) { return mfpipe::make_model(spec, d_in, n_out, s); };
            const auto curve = eval::budget_run(factory, task, a.budgets, spec.train, g.seed,
                                                a.step_seconds > 0 ? counting_clock(a.step_seconds) : eval::steady_clock());
            for (const auto& p : curve) {
                text += fmt::format("{},{},{},{},{},{}\n", fam, p.budget, p.elapsed, p.steps, p.error,
                                    p.single_step ? 1 : 0);
                fmt::print(out, "{} budget {}s: steps {}, 1-r2 {:.4f}\n", fam, p.budget, p.steps, p.error);
            }
        }
        csv::write_file((dir / "budget_curve.csv").string(), text);
    }

    if (!a.ranks.empty() || !a.widths.empty()) {
        std::string text = "model,knob,params,error,nrmse,train_seconds\n";
        auto sweep = [&](const std::string& fam, const std::vector<double>& knobs) {
            ModelFlags mf = a.model;
            mf.family = fam;
            const mfpipe::ModelSpec base = mf.pipeline(g.seed).lf;
            const auto factory = [&](double knob, std::uint64_t s) {
                mfpipe::ModelSpec spec = base;
                const auto v = static_cast<std::size_t>(knob);
                if (v == 0 || static_cast<double>(v) != knob) {
                    throw config_error(fmt::format("size knob {} is not a positive integer", knob));
                }
                if (fam == "khronos") {
                    spec.r = v;
                } else {
                    spec.hidden.assign(a.depth, v);
                }
                return mfpipe::make_model(spec, d_in, n_out, s);
            };
            for (const auto& p : eval::param_sweep_run(factory, knobs, task, base.train, g.seed)) {
                text += fmt::format("{},{},{},{},{},{}\n", fam, p.knob, p.params, p.error, p.nrmse, p.train_seconds);
                fmt::print(out, "{} knob {}: {} params, 1-r2 {:.4f}\n", fam, p.knob, p.params, p.error);
            }
        };
        if (!a.ranks.empty()) sweep("khronos", a.ranks);
        if (!a.widths.empty()) sweep("mlp", a.widths);
        csv::write_file((dir / "param_curve.csv").string(), text);
    }
    write_run_manifest(a.out, sub, g);
}

int report(const Error& e, std::ostream& err) {
    json j{{"kind", e.kind() == ErrorKind::config ? "config" : e.kind() == ErrorKind::data ? "data" : "numerical"},
           {"code", e.code()},
           {"message", e.what()}};
    if (const auto* p = dynamic_cast<const ParseError*>(&e)) j["line"] = p->line();
    if (const auto* d = dynamic_cast<const TrainingDiverged*>(&e)) j["epoch"] = d->epoch();
    err << json{{"error", j}}.dump() << "\n";
    switch (e.kind()) {
        case ErrorKind::config: return exit_config;
        case ErrorKind::data: return exit_data;
        case ErrorKind::numerical: return exit_numerical;
    }
    return exit_data;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multi-fidelity airfoil Cp surrogates with KHRONOS and MLP models", "kmf"};
    app.require_subcommand(1);
    app.set_config("--config", "", "key = value file; command options go under [command] sections");

    Globals g;
    app.add_option("--seed", g.seed, "Global seed")->capture_default_str();
    app.add_option("--jobs", g.jobs, "Worker threads (0 = runtime default)")->check(CLI::NonNegativeNumber);

    SynthArgs synth;
    auto* c_synth = app.add_subcommand("synth", "Generate a synthetic paired LF/HF dataset");
    c_synth->add_option("--n", synth.n, "Number of cases")->required();
    c_synth->add_option("--bias", synth.bias, "LF bias profile")->check(CLI::IsMember({"none", "offset", "suction-damped"}))->capture_default_str();
    c_synth->add_option("--layout", synth.layout, "Geometry feature layout")->check(CLI::IsMember({"y-only", "xy-flat"}))->capture_default_str();
    c_synth->add_option("--stations", synth.stations, "Cp stations (odd)")->capture_default_str();
    c_synth->add_option("--offset", synth.offset, "Shift of the offset profile")->capture_default_str();
    c_synth->add_option("--damping", synth.damping, "Suction damping of the suction-damped profile")->capture_default_str();
    c_synth->add_option("--test-fraction", synth.test_fraction, "Test fraction recorded in the manifest")->capture_default_str();
    c_synth->add_option("--out", synth.out, "Output dataset directory")->required();

    NacaArgs naca;
    auto* c_naca = app.add_subcommand("naca", "Write a NACA 4-digit surface CSV");
    c_naca->add_option("digits", naca.digits, "Four digits, e.g. 2412")->required();
    c_naca->add_option("--points", naca.points, "Points per side")->capture_default_str();
    c_naca->add_flag("--closed-te", naca.closed_te, "Closed trailing edge");
    c_naca->add_option("--out", naca.out, "Output CSV")->required();

    FitArgs fit;
    auto* c_fit = app.add_subcommand("fit-geom", "Fit a clamped cubic B-spline airfoil curve to a surface CSV");
    c_fit->add_option("input", fit.input, "Surface CSV (x, y and optional side, zeta)")->required();
    c_fit->add_option("--n-ctrl", fit.n_ctrl, "Total control points")->capture_default_str();
    c_fit->add_flag("--split-by-sign", fit.by_sign, "Split sides by the sign of y instead of the loop order");
    c_fit->add_option("--layout", fit.layout, "Feature layout written to features.json")->check(CLI::IsMember({"y-only", "xy-flat"}))->capture_default_str();
    c_fit->add_option("--out", fit.out, "Output directory (curve.json, fit_report.csv, reconstruction.csv)");

    ProcessArgs proc;
    auto* c_proc = app.add_subcommand("process-case", "Surface Cp at the station grid for one CFD case");
    c_proc->add_option("input", proc.input, "Surface CSV (x, y, and pbar, p or Cp)")->required();
    c_proc->add_option("--internal", proc.internal, "Internal field CSV (x, y, pbar, u, v)");
    c_proc->add_option("--meta", proc.meta, "CSV mapping file -> U, aoa");
    c_proc->add_option("--U", proc.U, "Freestream speed override");
    c_proc->add_option("--aoa", proc.aoa, "Angle of attack override (deg)");
    c_proc->add_option("--stations", proc.stations, "Cp stations (odd)")->capture_default_str();
    c_proc->add_option("--margin", proc.band.margin_fraction, "Far-field band margin in chords")->capture_default_str();
    c_proc->add_option("--quantile", proc.band.outlier_quantile, "Far-field outer radius quantile")->capture_default_str();
    c_proc->add_option("--min-band", proc.band.min_points, "Minimum far-field band points")->capture_default_str();
    c_proc->add_option("--out", proc.out, "Output JSON (stdout when absent)");

    IngestArgs ing;
    auto* c_ing = app.add_subcommand("ingest", "Build a dataset directory from LF and HF surface CSVs");
    c_ing->add_option("--lf-dir", ing.lf_dir, "Directory of LF surface CSVs")->required();
    c_ing->add_option("--hf-dir", ing.hf_dir, "Directory of HF surface CSVs matched by filename");
    c_ing->add_option("--internal-dir", ing.internal_dir, "Directory of HF internal field CSVs matched by filename");
    c_ing->add_option("--meta", ing.meta, "CSV mapping file -> U, aoa");
    c_ing->add_option("--n-ctrl", ing.n_ctrl, "Total control points")->capture_default_str();
    c_ing->add_option("--layout", ing.layout, "Geometry feature layout")->check(CLI::IsMember({"y-only", "xy-flat"}))->capture_default_str();
    c_ing->add_flag("--split-by-sign", ing.by_sign, "Split sides by the sign of y");
    c_ing->add_option("--stations", ing.stations, "Cp stations (odd)")->capture_default_str();
    c_ing->add_option("--test-fraction", ing.test_fraction, "Test fraction recorded in the manifest")->capture_default_str();
    c_ing->add_option("--out", ing.out, "Output dataset directory")->required();

    TrainArgs train;
    auto* c_train = app.add_subcommand("train", "Train the LF model and, with HF cases, the delta model");
    c_train->add_option("dataset", train.dataset, "Dataset directory")->required();
    add_model_flags(c_train, train.model);
    c_train->add_option("--out", train.out, "Output directory for checkpoints and histories")->required();

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("eval", "K-fold evaluation, per-fold records and summary");
    c_eval->add_option("dataset", ev.dataset, "Dataset directory")->required();
    add_model_flags(c_eval, ev.model);
    c_eval->add_option("--k", ev.k, "Number of folds")->capture_default_str();
    c_eval->add_option("--checkpoints", ev.checkpoints, "Score trained checkpoints on each fold instead of retraining");
    c_eval->add_option("--out", ev.out, "Output directory")->required();

    BenchArgs bench;
    auto* c_bench = app.add_subcommand("benchmark", "Time-budget and parameter-sweep curves");
    c_bench->add_option("dataset", bench.dataset, "Dataset directory")->required();
    add_model_flags(c_bench, bench.model);
    c_bench->add_option("--families", bench.families, "Families for the budget curve")->delimiter(',')->check(CLI::IsMember({"khronos", "mlp"}));
    c_bench->add_option("--budgets", bench.budgets, "Ascending wall-clock budgets in seconds")->delimiter(',');
    c_bench->add_option("--ranks", bench.ranks, "KHRONOS rank sweep")->delimiter(',');
    c_bench->add_option("--widths", bench.widths, "MLP hidden-width sweep")->delimiter(',');
    c_bench->add_option("--depth", bench.depth, "MLP hidden layers in the width sweep")->capture_default_str();
    c_bench->add_option("--target", bench.target, "Test truth: lf or hf")->check(CLI::IsMember({"lf", "hf"}))->capture_default_str();
    c_bench->add_option("--step-seconds", bench.step_seconds, "Replace the wall clock by a counter advancing this much per optimizer step");
    c_bench->add_option("--out", bench.out, "Output directory")->required();

    for (auto* s : app.get_subcommands({})) s->fallthrough();

    std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return exit_ok;
        }
        err << json{{"error", {{"kind", "config"}, {"code", "usage"}, {"message", e.what()}}}}.dump() << "\n";
        return exit_config;
    }

    try {
        parallel::set_threads(g.jobs);
        if (c_synth->parsed()) cmd_synth(synth, g, c_synth, out);
        else if (c_naca->parsed()) cmd_naca(naca, out);
        else if (c_fit->parsed()) cmd_fit_geom(fit, g, c_fit, out);
        else if (c_proc->parsed()) cmd_process_case(proc, out);
        else if (c_ing->parsed()) cmd_ingest(ing, g, c_ing, out);
        else if (c_train->parsed()) cmd_train(train, g, c_train, out, err);
        else if (c_eval->parsed()) cmd_eval(ev, g, c_eval, out);
        else if (c_bench->parsed()) cmd_benchmark(bench, g, c_bench, out);
    } catch (const Error& e) {
        return report(e, err);
    } catch (const std::filesystem::filesystem_error& e) {
        return report(io_error(e.what()), err);
    } catch (const std::exception& e) {
        return report(Error(ErrorKind::data, "internal", e.what()), err);
    }
    return exit_ok;
}

}  // namespace kmf::cli
