#include "smile/bundle.hpp"
#include "smile/checkpoint_io.hpp"
#include "smile/error.hpp"
#include "smile/fusion.hpp"
#include "smile/linalg.hpp"
#include "smile/smile.hpp"
#include "smile/subspace.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

namespace py = pybind11;
using namespace smile;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

DenseMatrix to_matrix(const Array& a) {
    if (a.ndim() != 2) throw py::value_error("expected a 2-D array, got " + std::to_string(a.ndim()) + "-D");
    const auto rows = static_cast<std::size_t>(a.shape(0)), cols = static_cast<std::size_t>(a.shape(1));
    return DenseMatrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

DenseVector to_vector(const Array& a) {
    if (a.ndim() != 1) throw py::value_error("expected a 1-D array, got " + std::to_string(a.ndim()) + "-D");
    return DenseVector(std::vector<double>(a.data(), a.data() + a.shape(0)));
}

std::optional<DenseVector> to_opt_vector(const std::optional<Array>& a) {
    if (!a) return std::nullopt;
    return to_vector(*a);
}

Array from_matrix(const DenseMatrix& m) {
    Array out({m.rows(), m.cols()});
    if (m.size()) std::memcpy(out.mutable_data(), m.values().data(), m.size() * sizeof(double));
    return out;
}

Array from_vector(const DenseVector& v) {
    Array out(v.dim());
    if (v.dim()) std::memcpy(out.mutable_data(), v.values().data(), v.dim() * sizeof(double));
    return out;
}

py::object from_opt_vector(const std::optional<DenseVector>& v) {
    return v ? py::object(from_vector(*v)) : py::none();
}

Zone parse_zone(const std::string& s) {
    if (s == "I") return Zone::I;
    if (s == "II") return Zone::II;
    if (s == "II+III") return Zone::IIAndIII;
    throw py::value_error("zone must be 'I', 'II' or 'II+III', got '" + s + "'");
}

Dtype parse_dtype(const std::string& s) {
    if (s == "float64" || s == "f64") return Dtype::F64;
    if (s == "float32" || s == "f32") return Dtype::F32;
    throw py::value_error("dtype must be 'float64' or 'float32'");
}

LinearParams to_linear(const py::tuple& t) {
    if (t.size() != 2) throw py::value_error("layers are (W, b) tuples; use None for a missing bias");
    LinearParams p{to_matrix(t[0].cast<Array>()), std::nullopt};
    if (!t[1].is_none()) p.b = to_vector(t[1].cast<Array>());
    return p;
}

py::tuple from_linear(const LinearParams& p) { return py::make_tuple(from_matrix(p.W), from_opt_vector(p.b)); }

DeltaSet delta_set(const py::tuple& base, const std::vector<py::tuple>& finetuned) {
    std::vector<LinearParams> ft;
    for (const auto& t : finetuned) ft.push_back(to_linear(t));
    return DeltaSet::from_finetuned(to_linear(base), ft);
}

py::dict router_dict(const RouterOutput& r) {
    py::dict d;
    d["logits"] = from_vector(r.logits);
    d["probs"] = from_vector(r.probs);
    d["selected"] = r.selected;
    d["weights"] = from_vector(r.weights);
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Sparse mixture of low-rank experts: zero-shot fusion of fine-tuned linear layers";

    static py::exception<Error> smile_error(m, "SmileError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object err = smile_error;
            PyErr_SetObject(err.ptr(), py::make_tuple(e.what(), to_string(e.kind())).ptr());
        }
    });

    // linear algebra
    m.def(
        "svd",
        [](const Array& a, bool full) {
            const SvdFactors f = svd(to_matrix(a), full ? SvdMode::Full : SvdMode::Reduced);
            return py::make_tuple(from_matrix(f.U), from_vector(f.sigma), from_matrix(f.V), f.rank);
        },
        py::arg("a"), py::arg("full") = false, "Returns (U, sigma, V, rank) with A = U diag(sigma) V^T.");
    m.def(
        "low_rank_approx",
        [](const Array& a, std::size_t k) { return from_matrix(reconstruct(truncate(svd(to_matrix(a)), k))); },
        py::arg("a"), py::arg("k"), "Best rank-k approximation in Frobenius norm.");
    m.def(
        "least_squares", [](const Array& a, const Array& y) { return from_vector(least_squares(to_matrix(a), to_vector(y))); },
        py::arg("a"), py::arg("y"));

    // subspace analysis
    m.def(
        "zone_partition",
        [](const Array& w) {
            const ZonePartition z = zone_partition(svd(to_matrix(w), SvdMode::Full));
            return py::make_tuple(z.r_half, z.r);
        },
        py::arg("w"), "Returns (r_half, r) for a pre-trained weight.");
    m.def(
        "project_zone",
        [](const Array& w, const Array& dw, const std::string& zone) {
            const DenseMatrix W = to_matrix(w);
            const ZoneProjection p = project_zone(W, to_matrix(dw), svd(W, SvdMode::Full), parse_zone(zone));
            return py::make_tuple(from_matrix(p.weight), p.empty_zone);
        },
        py::arg("w"), py::arg("dw"), py::arg("zone"), "Returns (W + P dW P, empty_zone).");
    m.def(
        "zone_energies",
        [](const Array& w, const Array& dw) {
            const DenseMatrix W = to_matrix(w);
            const SvdFactors f = svd(W, SvdMode::Full);
            const ZoneEnergies e = zone_energies(projection_coefficients(to_matrix(dw), f), zone_partition(f));
            py::dict d;
            d["total"] = e.total;
            d["zone_i"] = e.zone_i;
            d["zone_ii"] = e.zone_ii;
            d["zone_ii_iii"] = e.zone_ii_iii;
            d["cross"] = e.cross;
            return d;
        },
        py::arg("w"), py::arg("dw"));

    // merging baselines; layers are (W, b) tuples
    m.def(
        "weight_average", [](const py::tuple& base, const std::vector<py::tuple>& ft) { return from_linear(weight_average(delta_set(base, ft))); },
        py::arg("base"), py::arg("finetuned"));
    m.def(
        "task_arithmetic",
        [](const py::tuple& base, const std::vector<py::tuple>& ft, double lambda) {
            return from_linear(task_arithmetic(delta_set(base, ft), lambda));
        },
        py::arg("base"), py::arg("finetuned"), py::arg("scale"));
    m.def(
        "optimal_bias_lambda",
        [](const py::tuple& base, const std::vector<py::tuple>& ft, std::size_t target) {
            return from_vector(optimal_bias_lambda(delta_set(base, ft), target));
        },
        py::arg("base"), py::arg("finetuned"), py::arg("target"));
    m.def(
        "merging_error",
        [](const py::tuple& base, const std::vector<py::tuple>& ft, const Array& lambda, std::size_t target, const Array& x) {
            return merging_error(delta_set(base, ft), to_vector(lambda), target, to_vector(x));
        },
        py::arg("base"), py::arg("finetuned"), py::arg("weights"), py::arg("target"), py::arg("x"));

    // SMILE layers
    py::class_<SmileConfig>(m, "SmileConfig")
        .def(py::init([](std::size_t k, std::size_t k_gate, std::size_t top_k, std::size_t T) {
                 SmileConfig c{k, k_gate, top_k, T};
                 c.validate();
                 return c;
             }),
             py::arg("k"), py::arg("k_gate"), py::arg("top_k") = 1, py::arg("T") = 1)
        .def_readonly("k", &SmileConfig::k)
        .def_readonly("k_gate", &SmileConfig::k_gate)
        .def_readonly("top_k", &SmileConfig::top_k)
        .def_readonly("T", &SmileConfig::T)
        .def("__repr__", [](const SmileConfig& c) {
            return "SmileConfig(k=" + std::to_string(c.k) + ", k_gate=" + std::to_string(c.k_gate) +
                   ", top_k=" + std::to_string(c.top_k) + ", T=" + std::to_string(c.T) + ")";
        });

    m.def(
        "param_count",
        [](std::uint64_t m_, std::uint64_t n, const SmileConfig& cfg, bool bias) {
            const ParamCount pc = param_count(m_, n, cfg, bias);
            return py::make_tuple(pc.total_added, pc.activated_per_token);
        },
        py::arg("m"), py::arg("n"), py::arg("config"), py::arg("bias") = true,
        "Returns (total_added, activated_per_token).");
    m.def(
        "param_summary",
        [](std::uint64_t m_, std::uint64_t n, const SmileConfig& cfg, bool bias) {
            return format_param_summary(param_count(m_, n, cfg, bias), m_ * n);
        },
        py::arg("m"), py::arg("n"), py::arg("config"), py::arg("bias") = true);

    py::class_<LowRankExpert>(m, "LowRankExpert")
        .def_property_readonly("U", [](const LowRankExpert& e) { return from_matrix(e.U); })
        .def_property_readonly("sigma", [](const LowRankExpert& e) { return from_vector(e.sigma); })
        .def_property_readonly("V", [](const LowRankExpert& e) { return from_matrix(e.V); })
        .def_property_readonly("V_gate", [](const LowRankExpert& e) { return from_matrix(e.V_gate); })
        .def_property_readonly("delta_b", [](const LowRankExpert& e) { return from_opt_vector(e.delta_b); })
        .def_property_readonly("k_eff", &LowRankExpert::k_eff)
        .def_property_readonly("g_eff", &LowRankExpert::g_eff)
        .def("apply", [](const LowRankExpert& e, const Array& x) { return from_vector(e.apply(to_vector(x))); })
        .def("gate_logit", [](const LowRankExpert& e, const Array& x) { return e.gate_logit(to_vector(x)); });

    m.def(
        "build_expert",
        [](const Array& dw, const std::optional<Array>& db, const SmileConfig& cfg) {
            return build_expert(to_matrix(dw), to_opt_vector(db), cfg);
        },
        py::arg("dw"), py::arg("db") = py::none(), py::arg("config"));
    m.def(
        "build_expert_from_lora",
        [](const Array& b, const Array& a, const std::optional<Array>& db, const SmileConfig& cfg) {
            return build_expert_from_lora(to_matrix(b), to_matrix(a), to_opt_vector(db), cfg);
        },
        py::arg("b"), py::arg("a"), py::arg("db") = py::none(), py::arg("config"));

    py::class_<SmileLayer>(m, "SmileLayer")
        .def_static(
            "upscale",
            [](const py::tuple& base, const std::vector<py::tuple>& ft, std::size_t k, std::size_t k_gate, std::size_t top_k) {
                std::vector<LinearParams> layers;
                for (const auto& t : ft) layers.push_back(to_linear(t));
                return upscale_layer(to_linear(base), layers, {k, k_gate, top_k, layers.size()});
            },
            py::arg("base"), py::arg("finetuned"), py::arg("k"), py::arg("k_gate"), py::arg("top_k") = 1,
            "Builds a SMILE layer from a pre-trained (W, b) and fine-tuned (W, b) tuples.")
        .def_property_readonly("config", &SmileLayer::config)
        .def_property_readonly("experts", &SmileLayer::experts)
        .def_property_readonly("in_dim", &SmileLayer::in_dim)
        .def_property_readonly("out_dim", &SmileLayer::out_dim)
        .def_property_readonly("added_parameters", &SmileLayer::added_parameters)
        .def("route", [](const SmileLayer& l, const Array& x) { return router_dict(l.route(to_vector(x))); })
        .def(
            "forward",
            [](const SmileLayer& l, const Array& x) -> Array {
                if (x.ndim() == 1) return from_vector(l.forward(to_vector(x)));
                const DenseMatrix batch = to_matrix(x);
                DenseMatrix out(batch.rows(), l.out_dim());
                for (std::size_t r = 0; r < batch.rows(); ++r) {
                    const auto row = batch.row(r);
                    const DenseVector y = l.forward(DenseVector(std::vector<double>(row.begin(), row.end())));
                    std::copy(y.values().begin(), y.values().end(), out.row(r).begin());
                }
                return from_matrix(out);
            },
            py::arg("x"), "Forward one input vector or a batch of row vectors; each row routes independently.");

    // checkpoints
    m.def(
        "read_store",
        [](const std::filesystem::path& path) {
            const TensorStore s = read_store(path);
            py::dict out;
            for (const auto& [name, e] : s.entries()) {
                if (e.shape.size() == 1)
                    out[py::str(name)] = from_vector(s.vector(name));
                else if (e.shape.size() == 2)
                    out[py::str(name)] = from_matrix(s.matrix(name));
                else
                    throw py::value_error("tensor '" + name + "' has rank " + std::to_string(e.shape.size()) +
                                          "; only 1-D and 2-D tensors are supported");
            }
            return out;
        },
        py::arg("path"), "Reads a store into a dict of float64 arrays.");
    m.def(
        "write_store",
        [](const std::filesystem::path& path, const py::dict& tensors, const std::string& dtype) {
            TensorStore s;
            const Dtype dt = parse_dtype(dtype);
            for (const auto& [key, value] : tensors) {
                const auto arr = value.cast<Array>();
                const std::string name = key.cast<std::string>();
                if (arr.ndim() == 1)
                    s.put_vector(name, to_vector(arr), dt);
                else
                    s.put_matrix(name, to_matrix(arr), dt);
            }
            return write_store(s, path);
        },
        py::arg("path"), py::arg("tensors"), py::arg("dtype") = "float64", "Writes 1-D/2-D arrays; returns bytes written.");

    m.def(
        "upscale_files",
        [](const std::filesystem::path& base, const std::vector<std::filesystem::path>& experts,
           const std::filesystem::path& out, std::size_t k, std::size_t k_gate, std::size_t top_k,
           const std::vector<std::string>& layers, std::size_t jobs) {
            std::vector<TensorStore> stores;
            for (const auto& p : experts) stores.push_back(read_store(p));
            UpscaleOptions opts;
            opts.jobs = jobs;
            UpscaleResult r;
            {
                py::gil_scoped_release release;
                r = upscale_model(read_store(base), stores, LayerSelector{layers}, {k, k_gate, top_k, stores.size()}, opts);
            }
            write_bundle(r.bundle, out);
            py::dict summary;
            for (const auto& l : r.layers)
                summary[py::str(l.layer)] = format_param_summary(l.nominal, static_cast<std::uint64_t>(l.m) * l.n);
            return py::make_tuple(summary, r.warnings);
        },
        py::arg("base"), py::arg("experts"), py::arg("out"), py::arg("k"), py::arg("k_gate"), py::arg("top_k") = 1,
        py::arg("layers") = std::vector<std::string>{}, py::arg("jobs") = 1,
        "Fuses checkpoint files into a bundle; returns (per-layer summary, warnings).");

    py::class_<SmileModel>(m, "SmileModel")
        .def(py::init([](const std::filesystem::path& model_json, const std::filesystem::path& bundle) {
                 return SmileModel(read_model_spec(model_json), read_bundle(bundle));
             }),
             py::arg("model_json"), py::arg("bundle"))
        .def("forward", [](const SmileModel& s, const Array& x) { return from_vector(s.forward(to_vector(x))); })
        .def_property_readonly("smile_layers", &SmileModel::smile_layer_names)
        .def_property_readonly("normalized_parameter_count", &SmileModel::normalized_parameter_count);
}
