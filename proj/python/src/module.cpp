#include "cascs/bra_analysis.hpp"
#include "cascs/image_io.hpp"
#include "cascs/matrix_bank.hpp"
#include "cascs/metrics.hpp"
#include "cascs/parallel.hpp"
#include "cascs/pipeline.hpp"
#include "cascs/wire.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace cascs;

namespace {

RecoveryConfig recovery_config(int phases, const std::string& prox, bool rte, std::uint64_t seed) {
  RecoveryConfig c;
  c.phases = phases;
  c.prox = make_prox(prox);
  c.rte = rte;
  c.rte_seed = seed;
  c.validate();
  return c;
}

py::bytes to_bytes(const std::vector<std::uint8_t>& v) {
  return py::bytes(reinterpret_cast<const char*>(v.data()), v.size());
}

std::vector<std::uint8_t> from_bytes(const py::bytes& b) {
  const std::string s = b;
  return {s.begin(), s.end()};
}

MeasurementSizeMap size_map(const IntGrid& sizes, int block, int n) {
  MeasurementSizeMap m{sizes, block, 0, n};
  if (m.blocks() > 0) m.budget_q = static_cast<int>(std::llround(static_cast<double>(m.total()) / m.blocks()));
  return m;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Content-aware block compressed sensing core";
  m.attr("__version__") = kVersion;
  m.attr("DEFAULT_GAMMA") = kDefaultGamma;

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<RangeError>(m, "RangeError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<BudgetError>(m, "BudgetError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("set_num_threads", &set_num_threads, py::arg("n"));

  py::class_<GeneratingMatrix>(m, "GeneratingMatrix")
      .def(py::init([](const RowMatrix& rows, int block) { return GeneratingMatrix(rows, block); }),
           py::arg("rows"), py::arg("block_size"))
      .def_property_readonly("n", &GeneratingMatrix::n)
      .def_property_readonly("block_size", &GeneratingMatrix::block_size)
      .def_property_readonly("hash", &GeneratingMatrix::hash)
      .def_property_readonly("rows", [](const GeneratingMatrix& a) { return RowMatrix(a.rows()); })
      .def("truncate", [](const GeneratingMatrix& a, int q) { return RowMatrix(a.truncate(q)); }, py::arg("q"))
      .def(
          "save",
          [](const GeneratingMatrix& a, const std::filesystem::path& p, bool f32) {
            save_matrix(a, p, f32 ? Precision::f32 : Precision::f64);
          },
          py::arg("path"), py::arg("f32") = false)
      .def_static("load", &load_matrix, py::arg("path"))
      .def("orthogonality", [](const GeneratingMatrix& a) {
        const auto d = orthogonality_report(a);
        py::dict out;
        out["eta"] = d.eta;
        out["max_offdiag"] = d.max_offdiag;
        out["row_near_zero_fraction"] = d.row_near_zero_fraction;
        return out;
      });

  m.def(
      "svd_init",
      [](const std::vector<Image>& images, int block) {
        auto r = svd_init(patches_from_images(images, block));
        return py::make_tuple(r.matrix, Vector(r.singular_values));
      },
      py::arg("images"), py::arg("block_size"),
      "Learn A_init = U^T from the blocks of the images. Returns (matrix, singular values).");

  m.def("clip_round", &clip_round, py::arg("x"), py::arg("bound_k"));
  m.def(
      "saliency", [](const Image& x, int window) { return default_saliency(x, window).scores; }, py::arg("image"),
      py::arg("window") = 7);
  m.def(
      "bra",
      [](const Image& scores, int block, int q, int k, std::uint64_t seed) {
        const auto r = bra(SaliencyMap{scores}, block, q, k, seed);
        py::dict out;
        out["sizes"] = r.sizes.sizes;
        out["ratios"] = r.ratios.ratios;
        out["iterations"] = r.trace.count();
        return out;
      },
      py::arg("scores"), py::arg("block_size"), py::arg("budget_q"), py::arg("bound_k"), py::arg("seed") = 0,
      "Block ratio aggregation over a saliency map. Returns sizes, ratios and iteration count.");
  m.def(
      "simulate_bra",
      [](int blocks, std::int64_t trials, int q, int k, std::uint64_t seed, int horizon) {
        const auto c = simulate_convergence(blocks, trials, q, k, seed, horizon);
        py::dict out;
        out["mean_delta"] = c.mean_delta;
        out["mean_abs_delta"] = c.mean_abs_delta;
        out["mean_mse"] = c.mean_mse;
        out["max_iterations"] = c.max_iterations;
        out["within_limit"] = static_cast<double>(c.converged_within_limit) / static_cast<double>(c.trials);
        return out;
      },
      py::arg("blocks"), py::arg("trials"), py::arg("budget_q") = 512, py::arg("bound_k") = 1024,
      py::arg("seed") = 1, py::arg("horizon") = 20);

  py::class_<BlockMeasurementSet>(m, "Measurements")
      .def_readonly("height", &BlockMeasurementSet::height)
      .def_readonly("width", &BlockMeasurementSet::width)
      .def_readonly("block_size", &BlockMeasurementSet::block_size)
      .def_readonly("matrix_hash", &BlockMeasurementSet::matrix_hash)
      .def_property_readonly("total", &BlockMeasurementSet::total_measurements)
      .def_property_readonly("coverage", [](const BlockMeasurementSet& s) { return s.coverage().sizes; })
      .def("to_bytes", [](const BlockMeasurementSet& s) { return to_bytes(encode_measurements(s)); })
      .def_static(
          "from_bytes", [](const py::bytes& b) { return decode_measurements(from_bytes(b)); }, py::arg("data"))
      .def("save", [](const BlockMeasurementSet& s, const std::filesystem::path& p) { save_measurements(s, p); })
      .def_static("load", &load_measurements, py::arg("path"))
      .def("__add__", &merge);

  m.def(
      "sample",
      [](const Image& x, const GeneratingMatrix& a, const IntGrid& sizes) {
        return sample_blocks(unfold(x, a.block_size(), Padding::reflect), a, size_map(sizes, a.block_size(), a.n()));
      },
      py::arg("image"), py::arg("matrix"), py::arg("sizes"), "Sample each block with its own row count q_i.");
  m.def(
      "sample_uniform",
      [](const Image& x, const GeneratingMatrix& a, int q) {
        return sample_uniform(unfold(x, a.block_size(), Padding::reflect), a, q);
      },
      py::arg("image"), py::arg("matrix"), py::arg("q"));
  m.def(
      "initialize", [](const BlockMeasurementSet& s, const GeneratingMatrix& a) { return initialize(s, a); },
      py::arg("meas"), py::arg("matrix"));
  m.def(
      "reconstruct",
      [](const BlockMeasurementSet& s, const GeneratingMatrix& a, int phases, const std::string& prox, bool rte,
         std::uint64_t seed) {
        const auto rmap = to_ratio_map(size_map(s.coverage().sizes, a.block_size(), a.n()));
        py::gil_scoped_release release;
        return reconstruct(s, a, rmap, recovery_config(phases, prox, rte, seed)).image;
      },
      py::arg("meas"), py::arg("matrix"), py::arg("phases") = 13, py::arg("prox") = "dct", py::arg("rte") = false,
      py::arg("seed") = 0, "Transpose initialization plus N_p recovery phases; R' comes from the block counts.");

  m.def(
      "run_pipeline",
      [](const Image& x, const GeneratingMatrix& a, double ratio, double gamma, const std::string& mode,
         std::uint64_t seed, int phases, const std::string& prox, bool rte) {
        PipelineConfig c;
        c.ratio = ratio;
        c.gamma = gamma;
        c.mode = parse_mode(mode);
        c.seed = seed;
        c.recovery = recovery_config(phases, prox, rte, seed);
        PipelineResult r;
        {
          py::gil_scoped_release release;
          r = run_pipeline(x, a, c);
        }
        py::dict out;
        out["reconstruction"] = r.reconstruction;
        out["initial"] = r.initial;
        out["sizes"] = to_size_map(r.ratios).sizes;
        out["q"] = r.budget.q;
        out["q_basic"] = r.budget.q_basic;
        out["bytes"] = r.log.total_bytes();
        py::list msgs;
        for (const auto& msg : r.log.messages) msgs.append(py::make_tuple(msg.name, to_bytes(msg.payload)));
        out["messages"] = msgs;
        return out;
      },
      py::arg("image"), py::arg("matrix"), py::arg("ratio"), py::arg("gamma") = kDefaultGamma,
      py::arg("mode") = "deployed", py::arg("seed") = 0, py::arg("phases") = 13, py::arg("prox") = "dct",
      py::arg("rte") = false);

  m.def("mse", &mse, py::arg("x"), py::arg("y"));
  m.def("psnr", &psnr, py::arg("x"), py::arg("y"));
  m.def("ssim", &ssim, py::arg("x"), py::arg("y"));
  m.def("load_image", &load_image, py::arg("path"));
  m.def("save_image", &save_image, py::arg("image"), py::arg("path"));
}
