#include "smile/harness.hpp"

#include "smile/error.hpp"
#include "smile/fusion.hpp"
#include "smile/linalg.hpp"
#include "smile/parallel.hpp"
#include "smile/random.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numbers>
#include <sstream>

namespace smile {

using nlohmann::json;

const char* to_string(TaskKind kind) noexcept {
    return kind == TaskKind::Regression ? "regression" : "classification";
}

namespace {

DenseVector sample_one(const TaskSpec& task, Rng& rng) {
    DenseVector x = task.mean.dim() ? task.mean : DenseVector(task.input_dim);
    for (std::size_t j = 0; j < task.basis.cols(); ++j) {
        const double z = task.scale * rng.normal();
        for (std::size_t i = 0; i < x.dim(); ++i) x[i] += task.basis(i, j) * z;
    }
    return x;
}

std::size_t argmax(const DenseVector& v) {
    return static_cast<std::size_t>(std::max_element(v.values().begin(), v.values().end()) - v.values().begin());
}

DenseVector softmax(const DenseVector& logits) {
    const double mx = logits.values()[argmax(logits)];
    DenseVector p(logits.dim());
    double z = 0.0;
    for (std::size_t i = 0; i < p.dim(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        z += p[i];
    }
    for (double& v : p.values()) v /= z;
    return p;
}

/// Loss and gradient with respect to the model output.
double output_loss(TaskKind kind, const DenseVector& y, const DenseVector& target, DenseVector& grad) {
    grad = DenseVector(y.dim());
    if (kind == TaskKind::Regression) {
        double loss = 0.0;
        for (std::size_t i = 0; i < y.dim(); ++i) {
            grad[i] = y[i] - target[i];
            loss += 0.5 * grad[i] * grad[i];
        }
        return loss;
    }
    const std::size_t label = argmax(target);
    const DenseVector p = softmax(y);
    for (std::size_t i = 0; i < y.dim(); ++i) grad[i] = p[i] - (i == label ? 1.0 : 0.0);
    return -std::log(std::max(p[label], 1e-300));
}

DenseMatrix embed_rows(const DenseMatrix& block, std::size_t total_rows, std::size_t row_offset) {
    DenseMatrix out(total_rows, block.cols());
    for (std::size_t r = 0; r < block.rows(); ++r)
        for (std::size_t c = 0; c < block.cols(); ++c) out(row_offset + r, c) = block(r, c);
    return out;
}

DenseVector geometric_spectrum(std::size_t rank, double scale, double decay) {
    DenseVector s(rank);
    double v = scale;
    for (std::size_t j = 0; j < rank; ++j, v *= decay) s[j] = v;
    return s;
}

std::vector<LinearParams> affine_params(const TaskSuite& suite, const TensorStore& store) {
    return DenseModel(suite.model, store).affine();
}

Dtype store_dtype(const TensorStore& store) {
    return store.entries().empty() ? Dtype::F64 : store.entries().begin()->second.dtype;
}

json matrix_columns_json(const DenseMatrix& m) {
    json cols = json::array();
    for (std::size_t c = 0; c < m.cols(); ++c) cols.push_back(m.column(c).raw());
    return cols;
}

} // namespace

std::vector<DenseVector> sample_inputs(const TaskSpec& task, std::size_t n, std::uint64_t stream_seed) {
    Rng rng(mix_seed(task.seed, stream_seed));
    std::vector<DenseVector> xs;
    xs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) xs.push_back(sample_one(task, rng));
    return xs;
}

TensorStore make_pretrained(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    TensorStore store;
    for (const LayerSpec& l : spec.layers) {
        if (!l.is_affine()) continue;
        const double stddev = 1.0 / std::sqrt(static_cast<double>(l.in_dim));
        store.put_matrix(weight_name(l.name), gaussian_matrix(l.out_dim, l.in_dim, rng, stddev));
        if (l.has_bias) store.put_vector(bias_name(l.name), gaussian_vector(l.out_dim, rng, stddev));
    }
    return store;
}

TensorStore finetune(const ModelSpec& spec, const TensorStore& base, const TaskSpec& task, const ForwardFn& teacher,
                     const FinetuneOptions& options) {
    if (options.steps == 0) throw Error(ErrorKind::Argument, "finetune: steps must be at least 1");
    if (options.lr < 0.0 || !std::isfinite(options.lr)) throw Error(ErrorKind::Argument, "finetune: lr must be >= 0");
    if (options.batch == 0) throw Error(ErrorKind::Argument, "finetune: batch must be at least 1");

    const DenseModel start(spec, base);
    std::vector<LinearParams> params = start.affine();
    Rng rng(mix_seed(mix_seed(task.seed, options.seed), 0x7a11));
    const double step_size = options.lr / static_cast<double>(options.batch);

    for (std::size_t step = 0; step < options.steps; ++step) {
        std::vector<DenseMatrix> grad_w;
        std::vector<DenseVector> grad_b;
        for (const LinearParams& p : params) {
            grad_w.emplace_back(p.W.rows(), p.W.cols());
            grad_b.emplace_back(p.W.rows());
        }
        double loss = 0.0;
        for (std::size_t s = 0; s < options.batch; ++s) {
            const DenseVector x = sample_one(task, rng);
            const DenseVector target = teacher(x);

            std::vector<DenseVector> inputs; // input of every layer, spec order
            DenseVector h = x;
            std::size_t a = 0;
            for (const LayerSpec& l : spec.layers) {
                inputs.push_back(h);
                if (!l.is_affine()) {
                    h = relu(std::move(h));
                    continue;
                }
                const LinearParams& p = params[a++];
                DenseVector y = matvec(p.W, h);
                if (p.b) y = add(y, *p.b);
                h = std::move(y);
            }

            DenseVector grad;
            loss += output_loss(task.kind, h, target, grad);
            for (std::size_t li = spec.layers.size(); li-- > 0;) {
                const LayerSpec& l = spec.layers[li];
                const DenseVector& in = inputs[li];
                if (!l.is_affine()) {
                    for (std::size_t i = 0; i < grad.dim(); ++i)
                        if (in[i] <= 0.0) grad[i] = 0.0;
                    continue;
                }
                --a;
                DenseMatrix& gw = grad_w[a];
                for (std::size_t r = 0; r < gw.rows(); ++r) {
                    const double g = grad[r];
                    if (g == 0.0) continue;
                    auto row = gw.row(r);
                    for (std::size_t c = 0; c < row.size(); ++c) row[c] += g * in[c];
                }
                grad_b[a] = add(grad_b[a], grad);
                if (a > 0) grad = matvec_t(params[a].W, grad);
            }
        }
        if (!std::isfinite(loss)) {
            throw Error(ErrorKind::Training, "finetune: loss became non-finite at step " + std::to_string(step));
        }
        for (std::size_t a = 0; a < params.size(); ++a) {
            auto w = params[a].W.values();
            auto g = grad_w[a].values();
            for (std::size_t i = 0; i < w.size(); ++i) w[i] -= step_size * g[i];
            if (params[a].b && !options.freeze_bias) {
                for (std::size_t i = 0; i < params[a].b->dim(); ++i) (*params[a].b)[i] -= step_size * grad_b[a][i];
            }
            if (!all_finite(params[a].W.values())) {
                throw Error(ErrorKind::Training, "finetune: weights became non-finite at step " + std::to_string(step));
            }
        }
    }

    TensorStore out = DenseModel(spec, std::move(params)).to_store(store_dtype(base));
    if (options.freeze_bias) {
        for (const LayerSpec& l : spec.layers)
            if (l.is_affine() && l.has_bias) out.put(bias_name(l.name), base.at(bias_name(l.name)));
    }
    return out;
}

double task_loss(const ForwardFn& model, const TaskSpec& task, const ForwardFn& teacher, std::size_t n,
                 std::uint64_t stream_seed) {
    double total = 0.0;
    DenseVector grad;
    for (const DenseVector& x : sample_inputs(task, n, stream_seed)) total += output_loss(task.kind, model(x), teacher(x), grad);
    return total / static_cast<double>(n);
}

double EvalReport::mean() const {
    if (per_task.empty()) return 0.0;
    double s = 0.0;
    for (const TaskScore& t : per_task) s += t.metric;
    return s / static_cast<double>(per_task.size());
}

std::string EvalReport::to_json() const {
    json tasks = json::array();
    for (const TaskScore& t : per_task) tasks.push_back({{"task_id", t.task_id}, {"kind", to_string(t.kind)}, {"metric", t.metric}});
    json j{{"method", method}, {"per_task", tasks}, {"mean", mean()}, {"normalized_param_count", normalized_param_count}};
    return j.dump(2) + "\n";
}

double evaluate_task(const ForwardFn& model, const TaskSpec& task, const ForwardFn& teacher, std::size_t n_samples,
                     std::uint64_t seed) {
    if (n_samples == 0) throw Error(ErrorKind::Argument, "evaluate: n_samples must be at least 1");
    const std::vector<DenseVector> xs = sample_inputs(task, n_samples, seed);
    if (task.kind == TaskKind::Classification) {
        std::size_t correct = 0;
        for (const DenseVector& x : xs) correct += argmax(model(x)) == argmax(teacher(x)) ? 1 : 0;
        return static_cast<double>(correct) / static_cast<double>(n_samples);
    }
    double sse = 0.0;
    std::size_t count = 0;
    for (const DenseVector& x : xs) {
        const DenseVector y = model(x);
        const DenseVector t = teacher(x);
        for (std::size_t i = 0; i < y.dim(); ++i) sse += (y[i] - t[i]) * (y[i] - t[i]);
        count += y.dim();
    }
    return 1.0 / (1.0 + sse / static_cast<double>(count));
}

EvalReport evaluate(const std::vector<ForwardFn>& models, const std::vector<TaskSpec>& tasks,
                    const std::vector<ForwardFn>& teachers, std::size_t n_samples, std::uint64_t seed,
                    std::string method, double normalized_param_count) {
    if (models.empty() || (models.size() != 1 && models.size() != tasks.size()) || teachers.size() != tasks.size()) {
        throw Error(ErrorKind::Argument, "evaluate: need one model (or one per task) and one teacher per task");
    }
    EvalReport report;
    report.method = std::move(method);
    report.normalized_param_count = normalized_param_count;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const ForwardFn& model = models.size() == 1 ? models.front() : models[i];
        report.per_task.push_back({tasks[i].task_id, tasks[i].kind, evaluate_task(model, tasks[i], teachers[i], n_samples, seed)});
    }
    return report;
}

RouterAccuracy router_accuracy(const SmileModel& model, const std::vector<TaskSpec>& tasks, std::size_t n_samples,
                               std::uint64_t seed) {
    RouterAccuracy acc;
    acc.layers = model.smile_layer_names();
    const std::size_t L = acc.layers.size();
    acc.per_layer_task.assign(L, std::vector<double>(tasks.size(), 0.0));
    std::vector<RouterOutput> routes;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        std::vector<std::size_t> hits(L, 0);
        for (const DenseVector& x : sample_inputs(tasks[t], n_samples, seed)) {
            model.forward_traced(x, routes);
            for (std::size_t l = 0; l < L; ++l) {
                if (routes[l].selected.size() != 1) {
                    throw Error(ErrorKind::Argument, "router_accuracy: requires a model fused with top_k = 1");
                }
                hits[l] += routes[l].selected.front() == t ? 1 : 0;
            }
        }
        for (std::size_t l = 0; l < L; ++l)
            acc.per_layer_task[l][t] = static_cast<double>(hits[l]) / static_cast<double>(n_samples);
    }
    for (std::size_t l = 0; l < L; ++l) {
        double s = 0.0;
        for (double v : acc.per_layer_task[l]) s += v;
        acc.per_layer.push_back(tasks.empty() ? 0.0 : s / static_cast<double>(tasks.size()));
    }
    double s = 0.0;
    for (double v : acc.per_layer) s += v;
    acc.mean = L ? s / static_cast<double>(L) : 0.0;
    return acc;
}

// ---------------------------------------------------------------------------

std::vector<ForwardFn> TaskSuite::teacher_fns() const {
    std::vector<ForwardFn> fns;
    for (const TensorStore& t : teachers) {
        auto m = std::make_shared<DenseModel>(model, t);
        fns.push_back([m](const DenseVector& x) { return m->forward(x); });
    }
    return fns;
}

std::string tasks_to_json(const TaskSuite& suite, const std::vector<std::string>& teacher_files,
                          const std::vector<std::string>& expert_files) {
    json tasks = json::array();
    for (std::size_t i = 0; i < suite.tasks.size(); ++i) {
        const TaskSpec& t = suite.tasks[i];
        tasks.push_back({{"task_id", t.task_id},
                         {"kind", to_string(t.kind)},
                         {"input_dim", t.input_dim},
                         {"output_dim", t.output_dim},
                         {"teacher", teacher_files.at(i)},
                         {"expert", expert_files.at(i)},
                         {"input", {{"mean", t.mean.raw()}, {"basis", matrix_columns_json(t.basis)}, {"scale", t.scale}}},
                         {"seed", t.seed}});
    }
    return json{{"model", "model.json"}, {"base", "base.safetensors"}, {"tasks", tasks}}.dump(2) + "\n";
}

void write_suite(const TaskSuite& suite, const std::filesystem::path& dir, Dtype dtype) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create directory '" + dir.string() + "'");

    auto convert = [dtype](const TensorStore& s) {
        TensorStore out;
        for (const auto& [name, e] : s.entries()) {
            if (e.shape.size() == 2)
                out.put_matrix(name, s.matrix(name), dtype);
            else
                out.put_vector(name, s.vector(name), dtype);
        }
        return out;
    };

    write_model_spec(suite.model, dir / "model.json");
    write_store(convert(suite.base), dir / "base.safetensors");
    std::vector<std::string> teacher_files, expert_files;
    for (std::size_t i = 0; i < suite.tasks.size(); ++i) {
        const std::string expert = "expert_" + std::to_string(i) + ".safetensors";
        write_store(convert(suite.experts.at(i)), dir / expert);
        expert_files.push_back(expert);
        if (suite.teachers.at(i) == suite.experts.at(i)) {
            teacher_files.push_back(expert);
        } else {
            const std::string teacher = "teacher_" + std::to_string(i) + ".safetensors";
            write_store(convert(suite.teachers.at(i)), dir / teacher);
            teacher_files.push_back(teacher);
        }
    }
    write_text_file(dir / "tasks.json", tasks_to_json(suite, teacher_files, expert_files));
}

TaskSuite read_suite(const std::filesystem::path& tasks_json) {
    const std::filesystem::path dir = tasks_json.parent_path();
    json j;
    try {
        j = json::parse(read_text_file(tasks_json));
    } catch (const json::parse_error& ex) {
        throw Error(ErrorKind::MalformedHeader, std::string("tasks.json: ") + ex.what());
    }
    TaskSuite suite;
    std::map<std::string, TensorStore> cache;
    auto load = [&](const std::string& file) -> const TensorStore& {
        auto it = cache.find(file);
        if (it == cache.end()) it = cache.emplace(file, read_store(dir / file)).first;
        return it->second;
    };
    try {
        suite.model = read_model_spec(dir / j.at("model").get<std::string>());
        suite.base = load(j.at("base").get<std::string>());
        for (const json& t : j.at("tasks")) {
            TaskSpec spec;
            spec.task_id = t.at("task_id").get<std::size_t>();
            const std::string kind = t.at("kind").get<std::string>();
            if (kind != "regression" && kind != "classification")
                throw Error(ErrorKind::MalformedHeader, "tasks.json: unknown task kind '" + kind + "'");
            spec.kind = kind == "regression" ? TaskKind::Regression : TaskKind::Classification;
            spec.input_dim = t.at("input_dim").get<std::size_t>();
            spec.output_dim = t.at("output_dim").get<std::size_t>();
            spec.teacher = t.at("teacher").get<std::string>();
            spec.expert = t.at("expert").get<std::string>();
            const json& in = t.at("input");
            spec.mean = DenseVector(in.at("mean").get<std::vector<double>>());
            std::vector<DenseVector> cols;
            for (const json& c : in.at("basis")) cols.emplace_back(c.get<std::vector<double>>());
            spec.basis = cols.empty() ? DenseMatrix(spec.input_dim, 0) : DenseMatrix::from_columns(cols);
            spec.scale = in.at("scale").get<double>();
            spec.seed = t.at("seed").get<std::uint64_t>();
            if (spec.mean.dim() != spec.input_dim || spec.basis.rows() != spec.input_dim)
                throw Error(ErrorKind::Shape, "tasks.json: task " + std::to_string(spec.task_id) + " input dims disagree");
            suite.teachers.push_back(load(spec.teacher));
            suite.experts.push_back(load(spec.expert));
            suite.tasks.push_back(std::move(spec));
        }
    } catch (const json::exception& ex) {
        throw Error(ErrorKind::MalformedHeader, std::string("tasks.json: ") + ex.what());
    }
    return suite;
}

// ---------------------------------------------------------------------------

TaskSuite make_analytic_suite(const AnalyticFixtureConfig& cfg) {
    const std::size_t T = cfg.tasks;
    const std::size_t d = cfg.subspace_dim;
    const std::size_t r = cfg.delta_rank;
    if (T == 0 || d == 0 || r == 0) throw Error(ErrorKind::Argument, "analytic fixture: tasks, subspace and rank must be >= 1");
    const std::size_t block = cfg.hidden_dim / T;
    const std::size_t needed_inputs = (T + (cfg.overlap > 0.0 ? 1 : 0)) * d;
    if (r > d || r > block || r > cfg.output_dim || needed_inputs > cfg.input_dim) {
        throw Error(ErrorKind::Argument, "analytic fixture: dimensions too small for the requested tasks and rank");
    }

    TaskSuite suite;
    suite.model = ModelSpec::mlp(cfg.input_dim, cfg.hidden_dim, cfg.output_dim, true);
    suite.base = make_pretrained(suite.model, cfg.seed);
    const DenseModel base(suite.model, suite.base);
    const LinearParams& fc1 = base.affine()[0];
    const LinearParams& head = base.affine()[1];

    Rng rng(mix_seed(cfg.seed, 1));
    const DenseMatrix q = random_orthonormal(cfg.input_dim, needed_inputs, rng);
    const DenseMatrix shared = cfg.overlap > 0.0 ? column_slice(q, T * d, (T + 1) * d) : DenseMatrix();
    const double theta = cfg.overlap * std::numbers::pi / 2.0;
    const DenseVector spectrum = geometric_spectrum(r, cfg.delta_scale, cfg.spectrum_decay);

    for (std::size_t t = 0; t < T; ++t) {
        DenseMatrix basis = column_slice(q, t * d, (t + 1) * d);
        if (cfg.overlap > 0.0) basis = thin_qr(add(scale(basis, std::cos(theta)), scale(shared, std::sin(theta)))).Q;

        const DenseMatrix u1 = embed_rows(random_orthonormal(block, r, rng), cfg.hidden_dim, t * block);
        const DenseMatrix dw1 = reconstruct(u1, spectrum, column_slice(basis, 0, r));
        DenseVector db1(cfg.hidden_dim);
        for (std::size_t i = t * block; i < (t + 1) * block; ++i) db1[i] = cfg.bias_shift;

        const DenseMatrix u2 = random_orthonormal(cfg.output_dim, r, rng);
        const DenseMatrix v2 = embed_rows(random_orthonormal(block, r, rng), cfg.hidden_dim, t * block);
        const DenseMatrix dw2 = reconstruct(u2, spectrum, v2);
        const DenseVector db2 = gaussian_vector(cfg.output_dim, rng, 0.5);

        const DenseModel expert(suite.model, {LinearParams{add(fc1.W, dw1), add(*fc1.b, db1)},
                                              LinearParams{add(head.W, dw2), add(*head.b, db2)}});
        suite.experts.push_back(expert.to_store());
        suite.teachers.push_back(suite.experts.back());

        TaskSpec spec;
        spec.task_id = t;
        spec.kind = cfg.kind;
        spec.input_dim = cfg.input_dim;
        spec.output_dim = cfg.output_dim;
        spec.teacher = spec.expert = "expert_" + std::to_string(t) + ".safetensors";
        spec.mean = DenseVector(cfg.input_dim);
        spec.basis = std::move(basis);
        spec.scale = cfg.input_scale;
        spec.seed = mix_seed(cfg.seed, 100 + t);
        suite.tasks.push_back(std::move(spec));
    }
    return suite;
}

TaskSuite make_sgd_suite(const SgdFixtureConfig& cfg) {
    const std::size_t T = cfg.tasks;
    const std::size_t d = cfg.subspace_dim;
    if (T == 0 || d == 0) throw Error(ErrorKind::Argument, "sgd fixture: tasks and subspace_dim must be >= 1");
    if (T * d > cfg.input_dim || T * d > cfg.hidden_dim || d > cfg.output_dim) {
        throw Error(ErrorKind::Argument, "sgd fixture: dimensions too small for the requested tasks");
    }

    TaskSuite suite;
    suite.model = ModelSpec::mlp(cfg.input_dim, cfg.hidden_dim, cfg.output_dim, true);
    suite.base = make_pretrained(suite.model, cfg.seed);
    const DenseModel base(suite.model, suite.base);
    const LinearParams& fc1 = base.affine()[0];
    const LinearParams& head = base.affine()[1];

    Rng rng(mix_seed(cfg.seed, 2));
    const SvdFactors f1 = svd(fc1.W, SvdMode::Full);
    const SvdFactors f2 = svd(head.W, SvdMode::Full);
    const DenseVector spectrum = geometric_spectrum(d, cfg.planted_scale, 0.8);

    for (std::size_t t = 0; t < T; ++t) {
        DenseMatrix in_basis, u1, v2, u2;
        if (cfg.placement == SubspacePlacement::Minor) {
            // trailing singular directions of each pre-trained weight
            const std::size_t in_off = cfg.input_dim - T * d + t * d;
            const std::size_t hid_off = cfg.hidden_dim - T * d + t * d;
            in_basis = column_slice(f1.V, in_off, in_off + d);
            u1 = column_slice(f1.U, hid_off, hid_off + d);
            v2 = column_slice(f2.V, hid_off, hid_off + d);
            u2 = column_slice(f2.U, cfg.output_dim - d, cfg.output_dim);
        } else {
            in_basis = random_orthonormal(cfg.input_dim, d, rng);
            u1 = random_orthonormal(cfg.hidden_dim, d, rng);
            v2 = random_orthonormal(cfg.hidden_dim, d, rng);
            u2 = random_orthonormal(cfg.output_dim, d, rng);
        }
        const DenseModel teacher(suite.model, {LinearParams{add(fc1.W, reconstruct(u1, spectrum, in_basis)), fc1.b},
                                               LinearParams{add(head.W, reconstruct(u2, spectrum, v2)), head.b}});
        suite.teachers.push_back(teacher.to_store());

        TaskSpec spec;
        spec.task_id = t;
        spec.kind = cfg.kind;
        spec.input_dim = cfg.input_dim;
        spec.output_dim = cfg.output_dim;
        spec.teacher = "teacher_" + std::to_string(t) + ".safetensors";
        spec.expert = "expert_" + std::to_string(t) + ".safetensors";
        spec.mean = DenseVector(cfg.input_dim);
        spec.basis = std::move(in_basis);
        spec.scale = cfg.input_scale;
        spec.seed = mix_seed(cfg.seed, 100 + t);
        suite.tasks.push_back(std::move(spec));
    }

    suite.experts.resize(T);
    const std::vector<ForwardFn> teachers = suite.teacher_fns();
    parallel_for(T, cfg.jobs, [&](std::size_t t) {
        suite.experts[t] = finetune(suite.model, suite.base, suite.tasks[t], teachers[t], cfg.train);
    });
    return suite;
}

// ---------------------------------------------------------------------------

DenseModel merge_suite(const TaskSuite& suite, double lambda) {
    const std::vector<LinearParams> base = affine_params(suite, suite.base);
    std::vector<std::vector<LinearParams>> experts;
    for (const TensorStore& e : suite.experts) experts.push_back(affine_params(suite, e));
    std::vector<LinearParams> merged;
    for (std::size_t a = 0; a < base.size(); ++a) {
        std::vector<LinearParams> ft;
        for (const auto& e : experts) ft.push_back(e[a]);
        const DeltaSet ds = DeltaSet::from_finetuned(base[a], ft);
        merged.push_back(lambda < 0.0 ? weight_average(ds) : task_arithmetic(ds, lambda));
    }
    return DenseModel(suite.model, std::move(merged));
}

DenseModel project_expert(const TaskSuite& suite, std::size_t task, Zone zone) {
    const std::vector<LinearParams> base = affine_params(suite, suite.base);
    const std::vector<LinearParams> ft = affine_params(suite, suite.experts.at(task));
    std::vector<LinearParams> out;
    for (std::size_t a = 0; a < base.size(); ++a) {
        const SvdFactors f = svd(base[a].W, SvdMode::Full);
        out.push_back({project_zone(base[a].W, sub(ft[a].W, base[a].W), f, zone).weight, base[a].b});
    }
    return DenseModel(suite.model, std::move(out));
}

SmileModel fuse_suite(const TaskSuite& suite, const SmileConfig& cfg, const LayerSelector& selector, std::size_t jobs) {
    UpscaleOptions options;
    options.jobs = jobs;
    const UpscaleResult result = upscale_model(suite.base, suite.experts, selector, cfg, options);
    return SmileModel(suite.model, result.bundle);
}

std::vector<SweepRow> sweep(const TaskSuite& suite, const std::vector<std::size_t>& ks,
                            const std::vector<std::size_t>& k_gates, const std::vector<std::size_t>& top_ks,
                            std::size_t n_samples, std::uint64_t seed, std::size_t jobs) {
    if (ks.empty() || k_gates.empty() || top_ks.empty()) throw Error(ErrorKind::Argument, "sweep: ranges must be nonempty");
    std::vector<SweepRow> rows;
    for (std::size_t k : ks)
        for (std::size_t g : k_gates)
            for (std::size_t top : top_ks) rows.push_back({k, g, top, 0.0, 0.0, 0, 0});

    const std::vector<ForwardFn> teachers = suite.teacher_fns();
    parallel_for(rows.size(), jobs, [&](std::size_t i) {
        SweepRow& row = rows[i];
        const SmileConfig cfg{row.k, row.k_gate, row.top_k, suite.experts.size()};
        const SmileModel fused = fuse_suite(suite, cfg);
        const EvalReport report = evaluate({fused.as_function()}, suite.tasks, teachers, n_samples, seed, "smile",
                                           fused.normalized_parameter_count());
        row.mean_score = report.mean();
        row.normalized_params = report.normalized_param_count;
        for (const LayerSpec& l : suite.model.layers) {
            if (!l.is_affine()) continue;
            const ParamCount pc = param_count(l.out_dim, l.in_dim, cfg, l.has_bias);
            row.added_params += pc.total_added;
            row.activated_params += pc.activated_per_token;
        }
    });
    return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    out << "k,k_gate,top_k,mean_score,normalized_params,added_params,activated_params\n";
    char buf[64];
    for (const SweepRow& r : rows) {
        out << r.k << ',' << r.k_gate << ',' << r.top_k << ',';
        std::snprintf(buf, sizeof buf, "%.6f", r.mean_score);
        out << buf << ',';
        std::snprintf(buf, sizeof buf, "%.6f", r.normalized_params);
        out << buf << ',' << r.added_params << ',' << r.activated_params << '\n';
    }
    return out.str();
}

} // namespace smile
