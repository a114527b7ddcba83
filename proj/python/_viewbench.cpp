// Python bindings for the core operations and the command-line driver.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "viewbench/cli.hpp"
#include "viewbench/error.hpp"
#include "viewbench/evalmetrics.hpp"
#include "viewbench/gradcheck.hpp"
#include "viewbench/losses.hpp"
#include "viewbench/tinynet.hpp"
#include "viewbench/viewgeom.hpp"

namespace py = pybind11;
using namespace viewbench;

namespace {

using BoxTuple = std::tuple<double, double, double, double>;

EmbeddingKind embedding_kind(const std::string& name) {
  if (name == "2d") return EmbeddingKind::kTwoD;
  if (name == "3d") return EmbeddingKind::kThreeD;
  throw Error(ErrorCode::kInvalidParameter, "embedding kind must be '2d' or '3d', got '" + name + "'");
}

ApRule ap_rule(const std::string& name) {
  if (name == "allpoints") return ApRule::kAllPoints;
  if (name == "elevenpoint") return ApRule::kElevenPoint;
  throw Error(ErrorCode::kInvalidParameter, "ap rule must be 'allpoints' or 'elevenpoint', got '" + name + "'");
}

Box to_box(const BoxTuple& b) { return {std::get<0>(b), std::get<1>(b), std::get<2>(b), std::get<3>(b)}; }

std::vector<double> encode_py(double theta, const std::string& kind) {
  const PoseEmbedding e = encode(AngleRad(theta), embedding_kind(kind));
  return {e.coords().begin(), e.coords().end()};
}

py::tuple pr_curve_py(const std::vector<bool>& flags, int n_gt, const std::string& rule) {
  const PrCurve c = pr_curve(flags, n_gt, ap_rule(rule));
  std::vector<std::pair<double, double>> points;
  for (const auto& p : c.points) points.emplace_back(p.recall, p.precision);
  return py::make_tuple(c.ap, points);
}

py::dict evaluate_py(const std::vector<std::tuple<std::string, int, BoxTuple, double>>& gts,
                     const std::vector<std::tuple<std::string, int, BoxTuple, double, double>>& dets,
                     const std::vector<int>& bins, double iou_threshold, const std::string& rule) {
  std::vector<GroundTruthRecord> g;
  for (const auto& [img, cls, box, az] : gts) g.push_back({img, cls, to_box(box), AngleRad(az)});
  std::vector<DetectionRecord> d;
  for (const auto& [img, cls, box, score, az] : dets) d.push_back({img, cls, to_box(box), score, AngleRad(az)});
  const EvalReport r = evaluate(g, d, {bins, iou_threshold, ap_rule(rule)});
  py::dict per_class;
  for (const auto& [cls, m] : r.per_class) {
    py::dict entry;
    entry["n_gt"] = m.n_gt;
    entry["ap"] = m.ap ? py::cast(*m.ap) : py::none();
    entry["avp"] = m.avp;
    per_class[py::int_(cls)] = entry;
  }
  py::dict out;
  out["per_class"] = per_class;
  out["mean_ap"] = r.mean_ap;
  out["mean_avp"] = r.mean_avp;
  return out;
}

OutputLayout layout_for(LossKind kind, int n_classes, int n_bins, EmbeddingKind emb) {
  switch (kind) {
    case LossKind::kRegression: return OutputLayout::reg_pose(n_classes, emb);
    case LossKind::kClassification:
    case LossKind::kGeometricClassification: return OutputLayout::cls_pose(n_classes, n_bins);
    case LossKind::kJointRegression: return OutputLayout::joint_reg(n_classes, emb);
    case LossKind::kJointClassification: return OutputLayout::joint_cls(n_classes, n_bins);
  }
  throw Error(ErrorCode::kInvalidParameter, "unknown loss kind");
}

LossKind loss_kind(const std::string& name) {
  for (LossKind k : {LossKind::kRegression, LossKind::kClassification, LossKind::kGeometricClassification,
                     LossKind::kJointRegression, LossKind::kJointClassification}) {
    if (loss_name(k) == name) return k;
  }
  throw Error(ErrorCode::kInvalidParameter, "unknown loss '" + name + "'");
}

py::tuple loss_py(const std::string& kind_name, py::array_t<double, py::array::c_style | py::array::forcecast> outputs,
                  const std::vector<std::pair<int, std::optional<double>>>& targets, int n_classes, int n_bins,
                  const std::string& embedding, std::optional<double> sigma, double lambda, double huber_delta) {
  const LossKind kind = loss_kind(kind_name);
  const OutputLayout layout = layout_for(kind, n_classes, n_bins, embedding_kind(embedding));
  if (outputs.ndim() != 2 || static_cast<std::size_t>(outputs.shape(1)) != layout.size()) {
    throw Error(ErrorCode::kLayoutError,
                "outputs must have shape (n, " + std::to_string(layout.size()) + ") for this head");
  }
  const auto n = static_cast<std::size_t>(outputs.shape(0));
  if (targets.size() != n) throw Error(ErrorCode::kLayoutError, "one target per output row is required");
  std::vector<OutputTensor> out;
  std::vector<SampleTarget> tgt;
  const double* data = outputs.data();
  for (std::size_t i = 0; i < n; ++i) {
    out.emplace_back(layout, std::vector<double>(data + i * layout.size(), data + (i + 1) * layout.size()));
    const auto& [cls, az] = targets[i];
    if (cls == 0) {
      tgt.push_back(SampleTarget::background());
    } else {
      if (!az) throw Error(ErrorCode::kInvalidParameter, "foreground targets need an azimuth");
      tgt.push_back(SampleTarget::foreground(cls, AngleRad(*az)));
    }
  }
  LossSpec spec;
  spec.kind = kind;
  spec.sigma = sigma;
  spec.lambda = lambda;
  spec.huber_delta = huber_delta;
  const LossResult r = compute_loss(spec, out, tgt);
  py::array_t<double> grad({static_cast<py::ssize_t>(n), static_cast<py::ssize_t>(layout.size())});
  auto g = grad.mutable_unchecked<2>();
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = r.grad[i].values();
    for (std::size_t j = 0; j < row.size(); ++j) g(i, j) = row[j];
  }
  return py::make_tuple(r.value, grad);
}

std::vector<py::dict> gradcheck_py(std::uint64_t seed, int instances, bool corrupt) {
  GradCheckOptions opt;
  opt.seed = seed;
  opt.instances = instances;
  opt.corrupt = corrupt;
  std::vector<py::dict> out;
  for (const auto& c : run_gradcheck(opt)) {
    py::dict d;
    d["name"] = c.name;
    d["checked"] = c.checked;
    d["skipped"] = c.skipped;
    d["max_rel_error"] = c.max_rel_error;
    d["tolerance"] = c.tolerance;
    d["passed"] = c.passed();
    out.push_back(d);
  }
  return out;
}

py::tuple run_cli_py(std::vector<std::string> args) {
  args.insert(args.begin(), "viewbench");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  int code = 0;
  {
    py::gil_scoped_release release;
    code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_viewbench, m) {
  m.doc() = "Viewpoint estimation benchmark core";
  py::register_exception<Error>(m, "ViewbenchError", PyExc_ValueError);

  m.def("canonicalize", [](double theta) { return canonicalize(theta).value(); }, py::arg("theta"));
  m.def("azimuth_to_bin", [](double theta, int n_bins) { return azimuth_to_bin(AngleRad(theta), n_bins).index(); },
        py::arg("theta"), py::arg("n_bins"));
  m.def("encode", &encode_py, py::arg("theta"), py::arg("kind") = "2d");
  m.def("decode", [](const std::vector<double>& coords, const std::string& kind) {
          return decode(coords, embedding_kind(kind)).value();
        },
        py::arg("coords"), py::arg("kind") = "2d");
  m.def("iou", [](const BoxTuple& a, const BoxTuple& b) { return iou(to_box(a), to_box(b)); }, py::arg("a"),
        py::arg("b"));
  m.def("pr_curve", &pr_curve_py, py::arg("flags"), py::arg("n_gt"), py::arg("rule") = "allpoints");
  m.def("evaluate", &evaluate_py, py::arg("gts"), py::arg("dets"),
        py::arg("bins") = std::vector<int>{4, 8, 16, 24}, py::arg("iou") = 0.5, py::arg("rule") = "allpoints");
  m.def("loss", &loss_py, py::arg("kind"), py::arg("outputs"), py::arg("targets"), py::arg("n_classes"),
        py::arg("n_bins") = 24, py::arg("embedding") = "2d", py::arg("sigma") = py::none(),
        py::arg("lam") = kDefaultJointLambda, py::arg("huber_delta") = kDefaultHuberDelta);
  m.def("gradcheck", &gradcheck_py, py::arg("seed") = 0, py::arg("instances") = 20, py::arg("corrupt") = false);
  m.def("run_cli", &run_cli_py, py::arg("args"));
}
