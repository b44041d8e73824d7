#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "rwseg/error.hpp"
#include "rwseg/nrvf.hpp"
#include "rwseg/outputs.hpp"
#include "rwseg/pipeline.hpp"
#include "rwseg/reference.hpp"
#include "rwseg/synthetic.hpp"

namespace py = pybind11;
using namespace rwseg;

namespace {

HeadFeatures head_of(const Matrix& queries, const Matrix& keys) {
  HeadFeatures h;
  h.queries = queries;
  h.keys = keys;
  return h;
}

py::array_t<std::uint32_t> mask_array(const ClassMask& mask) {
  py::array_t<std::uint32_t> out({mask.grid_h, mask.grid_w});
  std::copy(mask.labels.begin(), mask.labels.end(), out.mutable_data());
  return out;
}

py::dict walk_result(const LabelProbabilities& p) {
  py::dict d;
  d["p"] = p.p;
  d["steps_used"] = p.steps_used;
  d["residual_bound"] = p.residual_bound_value;
  return d;
}

PipelineOptions make_options(double alpha, int steps, double beta, double c, double epsilon_self,
                             const std::string& mode, const std::string& fusion,
                             const std::string& affinity, const std::string& order,
                             const std::string& nonneg) {
  PipelineOptions o;
  o.walk.alpha = alpha;
  o.walk.steps = steps;
  o.walk.fusion.beta = beta;
  o.walk.fusion.epsilon_self = epsilon_self;
  o.walk.temperature = c;
  o.walk.mode = parse_walk_mode(mode);
  o.fusion = parse_fusion(fusion);
  o.affinity = parse_affinity(affinity);
  o.order = parse_order(order);
  o.nonneg = parse_nonneg(nonneg);
  return o;
}

py::dict refine(const std::filesystem::path& path, double alpha, int steps, double beta, double c,
                double epsilon_self, const std::string& mode, const std::string& fusion,
                const std::string& affinity, const std::string& order, const std::string& nonneg) {
  const auto bundle = nrvf::load_bundle(path);
  const auto options =
      make_options(alpha, steps, beta, c, epsilon_self, mode, fusion, affinity, order, nonneg);
  PipelineResult r;
  {
    py::gil_scoped_release release;
    r = run_pipeline(bundle, options, path.string());
  }
  py::dict d = walk_result(r.probabilities);
  d["mask"] = mask_array(r.mask);
  d["entropies"] = r.weighting.entropies;
  d["weights"] = r.weighting.weights;
  d["selected_head"] = r.selected_head;
  d["class_names"] = r.manifest.class_names;
  d["manifest"] = manifest_to_json(r.manifest);
  return d;
}

py::array_t<std::uint32_t> synth(const std::filesystem::path& path, int grid_h, int grid_w,
                                 int feature_dim, int heads, int classes,
                                 const std::string& label_mode, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.grid_h = grid_h;
  spec.grid_w = grid_w;
  spec.feature_dim = feature_dim;
  spec.heads = heads;
  spec.classes = classes;
  spec.seed = seed;
  if (label_mode == "cross") {
    spec.label_mode = nrvf::LabelMode::CrossAttention;
  } else if (label_mode != "probs") {
    fail(ErrorCode::InvalidArgument, "label_mode must be 'probs' or 'cross'");
  }
  const auto scene = make_synthetic_scene(spec);
  nrvf::save_bundle(scene.bundle, path);
  return mask_array(scene.truth);
}

py::list verify(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<reference::CheckResult> results;
  {
    py::gil_scoped_release release;
    results = {reference::check_exact_dense({}, rng), reference::check_tail_equality({}, rng),
               reference::check_woodbury({}, rng), reference::check_path_equivalence({}, rng),
               reference::check_entropy_fusion({}, rng)};
  }
  py::list out;
  for (const auto& r : results) {
    py::dict d;
    d["name"] = r.name;
    d["passed"] = r.passed;
    d["max_deviation"] = r.max_deviation;
    d["tolerance"] = r.tolerance;
    d["detail"] = r.detail;
    out.append(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_rwseg, m) {
  m.doc() = "Random-walk refinement of coarse segmentation probabilities";

  static PyObject* error_type =
      py::exception<Error>(m, "RwsegError", PyExc_RuntimeError).release().ptr();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object err = py::reinterpret_borrow<py::object>(error_type)(e.what());
      err.attr("name") = std::string(e.name());
      PyErr_SetObject(error_type, err.ptr());
    }
  });

  m.def("global_affinity", [](const Matrix& q, const Matrix& k) {
    return global_affinity_dense(head_of(q, k)).values;
  }, py::arg("queries"), py::arg("keys"));
  m.def("local_affinity", [](const Matrix& q, const Matrix& k, int grid_h, int grid_w, double eps) {
    return to_dense(local_affinity(head_of(q, k), grid_h, grid_w, eps));
  }, py::arg("queries"), py::arg("keys"), py::arg("grid_h"), py::arg("grid_w"),
     py::arg("epsilon_self") = 1e-2);
  m.def("row_normalize", [](const Matrix& a) { return row_normalize(DenseAffinity{a}).to_dense(); },
        py::arg("affinity"));

  m.def("cross_attention_g", [](const Matrix& q, const Matrix& k) {
    return cross_attention_g(q, k).probabilities();
  }, py::arg("token_queries"), py::arg("prompt_keys"));
  m.def("g_from_probabilities", [](const Matrix& p) { return g_from_probabilities(p).probabilities(); },
        py::arg("probs"));

  m.def("head_entropy", &head_entropy, py::arg("p"));
  m.def("head_weights", [](const std::vector<double>& e, double c) { return head_weights(e, c); },
        py::arg("entropies"), py::arg("c") = 1.0);

  m.def("exact_walk_dense", [](const Matrix& s, const Matrix& g, double alpha) {
    return walk_result(exact_walk_dense(s, g_from_probabilities(g), alpha));
  }, py::arg("s"), py::arg("g"), py::arg("alpha") = 0.9);
  m.def("exact_walk_woodbury", [](const Matrix& q, const Matrix& k, const Matrix& g, double alpha) {
    return walk_result(exact_walk_woodbury(q, k, g_from_probabilities(g), alpha));
  }, py::arg("q_tilde"), py::arg("kmat"), py::arg("g"), py::arg("alpha") = 0.9);
  m.def("truncated_walk", [](const Matrix& s, const Matrix& g, double alpha, int steps) {
    WalkConfig cfg;
    cfg.alpha = alpha;
    cfg.steps = steps;
    const CompositeTransition t(StochasticMatrix::from_normalized(DenseAffinity{s}));
    return walk_result(truncated_walk(t, g_from_probabilities(g), cfg));
  }, py::arg("s"), py::arg("g"), py::arg("alpha") = 0.9, py::arg("steps") = 40);
  m.def("residual_l1", &residual_l1, py::arg("alpha"), py::arg("steps"), py::arg("n"));
  m.def("steps_for_tolerance", &steps_for_tolerance, py::arg("alpha"), py::arg("n"), py::arg("tol"));
  m.def("argmax_mask", [](const Matrix& p, int grid_h, int grid_w) {
    return mask_array(argmax_mask(p, grid_h, grid_w));
  }, py::arg("p"), py::arg("grid_h"), py::arg("grid_w"));

  m.def("refine", &refine, py::arg("path"), py::arg("alpha") = 0.9, py::arg("steps") = 40,
        py::arg("beta") = 0.5, py::arg("c") = 1.0, py::arg("epsilon_self") = 1e-2,
        py::arg("mode") = "truncated", py::arg("fusion") = "weighted", py::arg("affinity") = "fused",
        py::arg("order") = "per-head", py::arg("nonneg") = "shift");
  m.def("synth", &synth, py::arg("path"), py::arg("grid_h") = 24, py::arg("grid_w") = 24,
        py::arg("feature_dim") = 16, py::arg("heads") = 4, py::arg("classes") = 3,
        py::arg("label_mode") = "probs", py::arg("seed") = 0);
  m.def("verify", &verify, py::arg("seed") = 0);
}
