// smile: upscale fine-tuned checkpoints into a sparse mixture of low-rank experts,
// inspect weight deltas, and evaluate fused models on synthetic task suites.

#include "smile/bundle.hpp"
#include "smile/error.hpp"
#include "smile/harness.hpp"
#include "smile/linalg.hpp"
#include "smile/subspace.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

using namespace smile;
using nlohmann::json;

namespace {

int exit_code(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Shape:
    case ErrorKind::Argument:
    case ErrorKind::Config:
    case ErrorKind::Mismatch:
        return 2;
    case ErrorKind::Io:
    case ErrorKind::Truncated:
    case ErrorKind::Overlap:
    case ErrorKind::UnknownDtype:
    case ErrorKind::MalformedHeader:
        return 3;
    default:
        return 4;
    }
}

void log(const std::string& msg) { std::cerr << "smile: " << msg << "\n"; }

std::size_t default_jobs() {
    if (const char* env = std::getenv("SMILE_JOBS")) {
        try {
            const long v = std::stol(env);
            if (v >= 1) return static_cast<std::size_t>(v);
        } catch (const std::exception&) {
        }
        log(std::string("ignoring invalid SMILE_JOBS='") + env + "'");
    }
    return 1;
}

Dtype parse_dtype(const std::string& s) {
    if (s == "f64" || s == "F64") return Dtype::F64;
    if (s == "f32" || s == "F32") return Dtype::F32;
    throw Error(ErrorKind::Argument, "unknown dtype '" + s + "' (expected f32 or f64)");
}

/// "4", "1,2,4" or "1:8" (inclusive).
std::vector<std::size_t> parse_range(const std::string& text, const char* flag) {
    std::vector<std::size_t> out;
    auto number = [&](const std::string& s) -> std::size_t {
        std::size_t used = 0;
        unsigned long v = 0;
        try {
            v = std::stoul(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != s.size()) {
            throw Error(ErrorKind::Argument, std::string(flag) + ": cannot parse '" + s + "'");
        }
        return v;
    };
    if (const auto colon = text.find(':'); colon != std::string::npos) {
        const std::size_t lo = number(text.substr(0, colon));
        const std::size_t hi = number(text.substr(colon + 1));
        if (hi < lo) throw Error(ErrorKind::Argument, std::string(flag) + ": empty range '" + text + "'");
        for (std::size_t v = lo; v <= hi; ++v) out.push_back(v);
        return out;
    }
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t comma = text.find(',', start);
        out.push_back(number(text.substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
    } else {
        write_text_file(out_path, text);
        log("wrote " + out_path);
    }
}

// ---------------------------------------------------------------------------

struct UpscaleArgs {
    std::string base;
    std::vector<std::string> experts;
    std::size_t k = 0, k_gate = 0, top_k = 1;
    std::vector<std::string> layers;
    std::string out;
    std::string dtype = "f64";
    std::size_t jobs = 1;
};

int cmd_upscale(const UpscaleArgs& a) {
    SmileConfig cfg{a.k, a.k_gate, a.top_k, a.experts.size()};
    cfg.validate();
    const TensorStore base = read_store(a.base);
    std::vector<TensorStore> experts;
    for (const std::string& p : a.experts) experts.push_back(read_store(p));

    UpscaleOptions options;
    options.jobs = a.jobs;
    options.dtype = parse_dtype(a.dtype);
    const UpscaleResult result = upscale_model(base, experts, LayerSelector{a.layers}, cfg, options);
    for (const std::string& w : result.warnings) log("warning: " + w);
    write_bundle(result.bundle, a.out);

    ParamCount total;
    std::uint64_t original = 0;
    for (const LayerUpscaleSummary& s : result.layers) {
        const std::uint64_t mn = static_cast<std::uint64_t>(s.m) * s.n;
        std::cout << s.layer << ": " << format_param_summary(s.nominal, mn) << "\n";
        total.total_added += s.nominal.total_added;
        total.activated_per_token += s.nominal.activated_per_token;
        original += mn;
    }
    if (result.layers.size() > 1) std::cout << "total: " << format_param_summary(total, original) << "\n";
    log("wrote " + a.out + " and " + sidecar_path(a.out).string());
    return 0;
}

int cmd_param_count(std::uint64_t m, std::uint64_t n, const SmileConfig& cfg, bool bias) {
    cfg.validate();
    if (m == 0 || n == 0) throw Error(ErrorKind::Argument, "--m and --n must be at least 1");
    std::cout << format_param_summary(param_count(m, n, cfg, bias), m * n) << "\n";
    return 0;
}

int cmd_analyze(const std::string& base_path, const std::string& expert_path, const std::vector<std::string>& patterns) {
    const TensorStore base = read_store(base_path);
    const TensorStore expert = read_store(expert_path);
    const LayerSelector selector{patterns};
    json layers = json::array();
    for (const std::string& layer : linear_layers(base)) {
        if (!selector.matches(layer)) continue;
        const LinearParams w = load_linear(base, layer);
        if (!expert.contains(weight_name(layer))) throw Error(ErrorKind::Mismatch, "expert lacks '" + weight_name(layer) + "'");
        const DenseMatrix ft = expert.matrix(weight_name(layer));
        if (ft.rows() != w.W.rows() || ft.cols() != w.W.cols()) {
            throw Error(ErrorKind::Mismatch, "'" + weight_name(layer) + "' has shape " + ft.shape_string() + ", base has " +
                                                 w.W.shape_string());
        }
        const SvdFactors f = svd(w.W, SvdMode::Full);
        const ZonePartition zones = zone_partition(f);
        const ZoneEnergies e = zone_energies(projection_coefficients(sub(ft, w.W), f), zones);
        auto frac = [&](double v) { return e.total > 0.0 ? v / e.total : 0.0; };
        std::vector<double> top;
        for (std::size_t i = 0; i < std::min<std::size_t>(10, f.sigma.dim()); ++i) top.push_back(f.sigma[i]);
        layers.push_back({{"layer", layer},
                          {"m", w.W.rows()},
                          {"n", w.W.cols()},
                          {"r", zones.r},
                          {"r_half", zones.r_half},
                          {"delta_energy", e.total},
                          {"energy_fraction",
                           {{"zone_i", frac(e.zone_i)},
                            {"zone_ii", frac(e.zone_ii)},
                            {"zone_ii_iii", frac(e.zone_ii_iii)},
                            {"cross", frac(e.cross)}}},
                          {"top_sigma", top}});
    }
    if (layers.empty()) throw Error(ErrorKind::Argument, "no linear layer matches the selector");
    std::cout << json{{"layers", layers}}.dump(2) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string tasks;
    std::string model;
    std::string method = "smile";
    std::size_t samples = 1000;
    std::uint64_t seed = 0;
    double lambda = 0.3;
    std::size_t k = 0, k_gate = 0, top_k = 1;
    std::vector<std::string> layers;
    std::string out;
    std::size_t jobs = 1;
};

int cmd_eval(const EvalArgs& a) {
    static const std::vector<std::string> methods{"smile", "store", "base", "average", "task-arithmetic", "individual"};
    if (std::find(methods.begin(), methods.end(), a.method) == methods.end()) {
        throw Error(ErrorKind::Argument, "unknown method '" + a.method +
                                             "' (expected smile, store, base, average, task-arithmetic or individual)");
    }
    if (a.method == "store" && a.model.empty()) throw Error(ErrorKind::Argument, "--method store requires --model");

    const TaskSuite suite = read_suite(a.tasks);
    const std::vector<ForwardFn> teachers = suite.teacher_fns();
    const double T = static_cast<double>(suite.tasks.size());
    EvalReport report;

    if (a.method == "smile") {
        std::optional<SmileModel> fused;
        if (!a.model.empty()) {
            fused.emplace(suite.model, read_bundle(a.model));
        } else {
            if (a.k == 0 || a.k_gate == 0) throw Error(ErrorKind::Argument, "--method smile without --model requires --k and --k-gate");
            fused.emplace(fuse_suite(suite, {a.k, a.k_gate, a.top_k, suite.experts.size()}, LayerSelector{a.layers}, a.jobs));
        }
        report = evaluate({fused->as_function()}, suite.tasks, teachers, a.samples, a.seed, a.method,
                          fused->normalized_parameter_count());
    } else if (a.method == "store") {
        const DenseModel m(suite.model, read_store(a.model));
        report = evaluate({m.as_function()}, suite.tasks, teachers, a.samples, a.seed, a.method, 1.0);
    } else if (a.method == "base") {
        const DenseModel m = suite.base_model();
        report = evaluate({m.as_function()}, suite.tasks, teachers, a.samples, a.seed, a.method, 1.0);
    } else if (a.method == "average" || a.method == "task-arithmetic") {
        const DenseModel m = merge_suite(suite, a.method == "average" ? -1.0 : a.lambda);
        report = evaluate({m.as_function()}, suite.tasks, teachers, a.samples, a.seed, a.method, 1.0);
    } else {
        std::vector<DenseModel> models;
        std::vector<ForwardFn> fns;
        for (std::size_t i = 0; i < suite.experts.size(); ++i) models.push_back(suite.expert_model(i));
        for (const DenseModel& m : models) fns.push_back(m.as_function());
        report = evaluate(fns, suite.tasks, teachers, a.samples, a.seed, a.method, T);
    }
    emit(report.to_json(), a.out);
    return 0;
}

struct SweepArgs {
    std::string tasks;
    std::string k_range = "1", k_gate_range = "1", top_k_range = "1";
    std::size_t samples = 1000;
    std::uint64_t seed = 0;
    std::string out;
    std::size_t jobs = 1;
};

int cmd_sweep(const SweepArgs& a) {
    const auto ks = parse_range(a.k_range, "--k-range");
    const auto gates = parse_range(a.k_gate_range, "--k-gate-range");
    const auto tops = parse_range(a.top_k_range, "--top-k-range");
    const TaskSuite suite = read_suite(a.tasks);
    for (std::size_t k : ks)
        for (std::size_t g : gates)
            for (std::size_t t : tops) SmileConfig{k, g, t, suite.experts.size()}.validate();
    log("sweeping " + std::to_string(ks.size() * gates.size() * tops.size()) + " configurations");
    emit(sweep_to_csv(sweep(suite, ks, gates, tops, a.samples, a.seed, a.jobs)), a.out);
    return 0;
}

struct FixtureArgs {
    std::string kind = "analytic";
    std::string out;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::size_t tasks = 4;
    double overlap = 0.0;
    std::string task_kind;
    std::string placement = "minor";
    std::string dtype = "f64";
    std::size_t steps = 1000;
    std::size_t jobs = 1;
};

int cmd_gen_fixtures(const FixtureArgs& a) {
    const Dtype dtype = parse_dtype(a.dtype);
    auto task_kind = [&](TaskKind fallback) {
        if (a.task_kind.empty()) return fallback;
        if (a.task_kind == "regression") return TaskKind::Regression;
        if (a.task_kind == "classification") return TaskKind::Classification;
        throw Error(ErrorKind::Argument, "unknown task kind '" + a.task_kind + "'");
    };
    TaskSuite suite;
    if (a.kind == "analytic") {
        AnalyticFixtureConfig cfg;
        cfg.tasks = a.tasks;
        cfg.overlap = a.overlap;
        cfg.kind = task_kind(cfg.kind);
        if (a.seed_set) cfg.seed = a.seed;
        suite = make_analytic_suite(cfg);
    } else if (a.kind == "sgd") {
        SgdFixtureConfig cfg;
        cfg.tasks = a.tasks;
        cfg.kind = task_kind(cfg.kind);
        cfg.train.steps = a.steps;
        cfg.train.freeze_bias = true;
        cfg.jobs = a.jobs;
        if (a.placement == "random") {
            cfg.placement = SubspacePlacement::Random;
        } else if (a.placement != "minor") {
            throw Error(ErrorKind::Argument, "unknown placement '" + a.placement + "' (expected minor or random)");
        }
        if (a.seed_set) cfg.seed = a.seed;
        log("fine-tuning " + std::to_string(cfg.tasks) + " experts");
        suite = make_sgd_suite(cfg);
    } else {
        throw Error(ErrorKind::Argument, "unknown fixture kind '" + a.kind + "' (expected analytic or sgd)");
    }
    write_suite(suite, a.out, dtype);
    log("wrote " + (std::filesystem::path(a.out) / "tasks.json").string());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Zero-shot fusion of fine-tuned models into a sparse mixture of low-rank experts"};
    app.require_subcommand(1);
    const std::size_t jobs_default = default_jobs();

    UpscaleArgs up;
    up.jobs = jobs_default;
    auto* upscale = app.add_subcommand("upscale", "Fuse a base model and fine-tuned experts into a SMILE bundle");
    upscale->add_option("base", up.base, "Pre-trained store (.safetensors)")->required();
    upscale->add_option("experts", up.experts, "Fine-tuned stores, one per task")->required();
    upscale->add_option("--k", up.k, "Expert rank")->required();
    upscale->add_option("--k-gate", up.k_gate, "Router rank")->required();
    upscale->add_option("--top-k", up.top_k, "Experts activated per input");
    upscale->add_option("--layers", up.layers, "Glob patterns of layers to upscale (default: all linear layers)");
    upscale->add_option("--out", up.out, "Output bundle path")->required();
    upscale->add_option("--dtype", up.dtype, "On-disk dtype (f32|f64)");
    upscale->add_option("--jobs", up.jobs, "Worker threads (default: $SMILE_JOBS or 1)");

    std::uint64_t pc_m = 0, pc_n = 0;
    SmileConfig pc_cfg;
    bool pc_no_bias = false;
    auto* pcount = app.add_subcommand("param-count", "Print added and activated parameters for one layer shape");
    pcount->add_option("--m", pc_m, "Output dimension")->required();
    pcount->add_option("--n", pc_n, "Input dimension")->required();
    pcount->add_option("--T", pc_cfg.T, "Number of experts")->required();
    pcount->add_option("--k", pc_cfg.k, "Expert rank")->required();
    pcount->add_option("--k-gate", pc_cfg.k_gate, "Router rank")->required();
    pcount->add_option("--top-k", pc_cfg.top_k, "Experts activated per input");
    pcount->add_flag("--no-bias", pc_no_bias, "Layer has no bias");

    std::string an_base, an_expert;
    std::vector<std::string> an_layers;
    auto* analyze = app.add_subcommand("analyze", "Report how a weight delta distributes over the base spectrum");
    analyze->add_option("base", an_base, "Pre-trained store")->required();
    analyze->add_option("expert", an_expert, "Fine-tuned store")->required();
    analyze->add_option("--layers", an_layers, "Glob patterns of layers to analyze");

    EvalArgs ev;
    ev.jobs = jobs_default;
    auto* eval = app.add_subcommand("eval", "Evaluate a model or merging method on a task suite");
    eval->add_option("tasks", ev.tasks, "tasks.json written by gen-fixtures")->required();
    eval->add_option("--model", ev.model, "SMILE bundle (method smile) or dense store (method store)");
    eval->add_option("--method", ev.method, "smile|store|base|average|task-arithmetic|individual");
    eval->add_option("--samples", ev.samples, "Held-out samples per task");
    eval->add_option("--seed", ev.seed, "Evaluation stream seed");
    eval->add_option("--lambda", ev.lambda, "Task-arithmetic coefficient");
    eval->add_option("--k", ev.k, "Expert rank when fusing on the fly");
    eval->add_option("--k-gate", ev.k_gate, "Router rank when fusing on the fly");
    eval->add_option("--top-k", ev.top_k, "Experts per input when fusing on the fly");
    eval->add_option("--layers", ev.layers, "Layers to upscale when fusing on the fly");
    eval->add_option("--out", ev.out, "Write the report here instead of stdout");
    eval->add_option("--jobs", ev.jobs, "Worker threads (default: $SMILE_JOBS or 1)");

    SweepArgs sw;
    sw.jobs = jobs_default;
    auto* sweep_cmd = app.add_subcommand("sweep", "Grid over k, k_gate and top-k; CSV to stdout");
    sweep_cmd->add_option("tasks", sw.tasks, "tasks.json written by gen-fixtures")->required();
    sweep_cmd->add_option("--k-range", sw.k_range, "e.g. 8, 1,2,4 or 1:8");
    sweep_cmd->add_option("--k-gate-range", sw.k_gate_range, "e.g. 4 or 1:4");
    sweep_cmd->add_option("--top-k-range", sw.top_k_range, "e.g. 1:4");
    sweep_cmd->add_option("--samples", sw.samples, "Held-out samples per task");
    sweep_cmd->add_option("--seed", sw.seed, "Evaluation stream seed");
    sweep_cmd->add_option("--out", sw.out, "Write the CSV here instead of stdout");
    sweep_cmd->add_option("--jobs", sw.jobs, "Worker threads (default: $SMILE_JOBS or 1)");

    FixtureArgs fx;
    fx.jobs = jobs_default;
    auto* gen = app.add_subcommand("gen-fixtures", "Write a synthetic base, experts and tasks.json");
    gen->add_option("--kind", fx.kind, "analytic|sgd");
    gen->add_option("--out", fx.out, "Output directory")->required();
    gen->add_option("--seed", fx.seed, "Fixture seed")->each([&](const std::string&) { fx.seed_set = true; });
    gen->add_option("--tasks", fx.tasks, "Number of tasks");
    gen->add_option("--overlap", fx.overlap, "Input subspace overlap in [0, 1] (analytic)");
    gen->add_option("--task-kind", fx.task_kind, "regression|classification");
    gen->add_option("--placement", fx.placement, "minor|random (sgd)");
    gen->add_option("--steps", fx.steps, "SGD steps per expert (sgd)");
    gen->add_option("--dtype", fx.dtype, "On-disk dtype (f32|f64)");
    gen->add_option("--jobs", fx.jobs, "Worker threads (default: $SMILE_JOBS or 1)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*upscale) return cmd_upscale(up);
        if (*pcount) return cmd_param_count(pc_m, pc_n, pc_cfg, !pc_no_bias);
        if (*analyze) return cmd_analyze(an_base, an_expert, an_layers);
        if (*eval) return cmd_eval(ev);
        if (*sweep_cmd) return cmd_sweep(sw);
        if (*gen) return cmd_gen_fixtures(fx);
    } catch (const Error& e) {
        log(std::string(to_string(e.kind())) + ": " + e.what());
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        log(std::string("error: ") + e.what());
        return 4;
    }
    return 2;
}
