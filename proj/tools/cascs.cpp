// cascs: command-line front end for matrix learning, block ratio allocation,
// sampling and reconstruction.

#include "cascs/bra_analysis.hpp"
#include "cascs/bytes.hpp"
#include "cascs/image_io.hpp"
#include "cascs/matrix_bank.hpp"
#include "cascs/metrics.hpp"
#include "cascs/parallel.hpp"
#include "cascs/pipeline.hpp"
#include "cascs/wire.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace cascs;

namespace {

struct Global {
  std::uint64_t seed = 0;
  int threads = 0;
  std::string config;
  int verbose = 0;
};

struct RecoveryArgs {
  int phases = 13;
  std::string prox = "dct";
  std::string rte = "off";
  std::vector<double> steps;

  void add(CLI::App* sub) {
    sub->add_option("--phases", phases, "recovery phases N_p")->capture_default_str();
    sub->add_option("--prox", prox, "zero | dct | dct:lambda=L[,tile=T]")->capture_default_str();
    sub->add_option("--rte", rte, "random transformation enhancement")
        ->check(CLI::IsMember({"on", "off"}))
        ->capture_default_str();
    sub->add_option("--steps", steps, "per-phase step sizes (default 1.0)")->delimiter(',');
  }

  RecoveryConfig build(std::uint64_t seed) const {
    RecoveryConfig c;
    c.phases = phases;
    c.step_sizes = steps;
    c.prox = make_prox(prox);
    c.rte = rte == "on";
    c.rte_seed = seed;
    c.validate();
    return c;
  }

  json to_json() const { return {{"phases", phases}, {"prox", prox}, {"rte", rte}, {"steps", steps}}; }
};

// ---------------------------------------------------------------------------
// small helpers

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string config_hash(const json& cfg) {
  const auto text = cfg.dump();
  return hex64(fnv1a64(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size())));
}

bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".pgm" || ext == ".ppm" || ext == ".pnm" || ext == ".png";
}

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw IoError("no PGM/PNG images in " + dir.string());
  return out;
}

/// Transpose initialization on the padded canvas.
Image canvas_of(const BlockMeasurementSet& meas, const GeneratingMatrix& a) {
  auto g = layout_of(meas);
  g.blocks = initialize_blocks(meas, a);
  return fold(g, false);
}

void write_text(const std::string& path, const std::string& text) { write_file_atomic(path, text); }

void print_json(const json& j) { std::cout << j.dump(2) << '\n'; }

const char* error_kind(const std::exception& e) {
  if (dynamic_cast<const ShapeError*>(&e)) return "shape";
  if (dynamic_cast<const RangeError*>(&e)) return "range";
  if (dynamic_cast<const FormatError*>(&e)) return "format";
  if (dynamic_cast<const IoError*>(&e)) return "io";
  if (dynamic_cast<const BudgetError*>(&e)) return "budget";
  if (dynamic_cast<const InvariantError*>(&e)) return "internal";
  return "runtime";
}

// ---------------------------------------------------------------------------
// JSON config overlay: values fill options that were not given as flags.

std::vector<std::string> config_inputs(const json& v) {
  if (v.is_array()) {
    std::vector<std::string> out;
    for (const auto& x : v) {
      auto s = config_inputs(x);
      out.insert(out.end(), s.begin(), s.end());
    }
    return out;
  }
  if (v.is_string()) return {v.get<std::string>()};
  if (v.is_boolean()) return {v.get<bool>() ? "true" : "false"};
  if (v.is_number()) return {v.dump()};
  throw CLI::ConversionError("config: unsupported value " + v.dump());
}

void overlay(CLI::App* app, const json& section) {
  if (!section.is_object()) return;
  for (CLI::Option* opt : app->get_options()) {
    if (opt->count() > 0) continue;
    std::string key = opt->get_lnames().empty() ? opt->get_name(true) : opt->get_lnames().front();
    if (key == "help" || key == "config" || key == "version") continue;
    auto it = section.find(key);
    if (it == section.end()) {
      std::string alt = key;
      std::replace(alt.begin(), alt.end(), '-', '_');
      it = section.find(alt);
    }
    if (it == section.end() || it->is_null()) continue;
    const auto inputs = config_inputs(*it);
    if (inputs.empty()) continue;
    for (const auto& s : inputs) opt->add_result(s);
    opt->run_callback();
  }
}

void apply_config(CLI::App& app, CLI::App* sub, const std::string& path) {
  const auto bytes = read_file(path);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw FormatError("config " + path + ": " + e.what());
  }
  // A run report embeds its config; accept the report itself.
  if (j.contains("schema") && j.contains("config")) j = j["config"];
  overlay(&app, j);
  if (j.contains(sub->get_name())) overlay(sub, j[sub->get_name()]);
}

void require(CLI::App* sub, std::initializer_list<const char*> names) {
  for (const char* n : names) {
    auto* opt = sub->get_option(n);
    if (opt->count() == 0) throw CLI::RequiredError(std::string(n));
  }
}

// ---------------------------------------------------------------------------
// init-matrix

struct InitMatrixArgs {
  std::string patches, out, precision = "f64";
  int block = 32;
  bool json = false;
};

int run_init_matrix(const InitMatrixArgs& a, const Global& g) {
  GramAccumulator gram(a.block);
  const auto files = list_images(a.patches);
  for (const auto& f : files) {
    gram.add_image(load_image(f));
    if (g.verbose) std::cerr << "read " << f.string() << " (" << gram.count() << " blocks)\n";
  }
  if (gram.count() == 0) throw ShapeError("no " + std::to_string(a.block) + "x" + std::to_string(a.block) +
                                          " blocks fit in the given images");
  const auto init = svd_init(gram);
  save_matrix(init.matrix, a.out, a.precision == "f32" ? Precision::f32 : Precision::f64);
  const auto& s = init.singular_values;
  const double energy = s.squaredNorm();
  const int shown = static_cast<int>(std::min<Eigen::Index>(8, s.size()));
  if (a.json) {
    json j{{"out", a.out},
           {"n", init.matrix.n()},
           {"block", a.block},
           {"images", files.size()},
           {"blocks", gram.count()},
           {"hash", hex64(init.matrix.hash())},
           {"precision", a.precision}};
    j["singular_values"] = std::vector<double>(s.data(), s.data() + shown);
    print_json(j);
  } else {
    std::cout << "matrix " << a.out << ": N=" << init.matrix.n() << " from " << gram.count() << " blocks in "
              << files.size() << " images, hash " << hex64(init.matrix.hash()) << '\n';
    double acc = 0.0;
    for (int i = 0; i < shown; ++i) {
      acc += s(i) * s(i);
      std::cout << "  sigma_" << i + 1 << " = " << s(i) << "  (cumulative energy " << acc / energy << ")\n";
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// analyze-matrix

struct AnalyzeArgs {
  std::string matrix, json_out;
  int bins = 64;
};

int run_analyze(const AnalyzeArgs& a) {
  const auto m = load_matrix(a.matrix);
  const auto d = orthogonality_report(m, a.bins);
  double mean_nz = 0.0;
  for (double f : d.row_near_zero_fraction) mean_nz += f;
  mean_nz /= std::max<std::size_t>(1, d.row_near_zero_fraction.size());
  std::cout << "matrix " << a.matrix << ": N=" << d.n << " B=" << m.block_size() << '\n'
            << "  eta (mean diag AA^T)     " << d.eta << '\n'
            << "  max |offdiag| normalized " << d.max_offdiag << '\n'
            << "  near-zero fraction       " << mean_nz << " (threshold " << d.near_zero_threshold << ")\n";
  if (!a.json_out.empty()) {
    json j{{"matrix", a.matrix},
           {"n", d.n},
           {"block", m.block_size()},
           {"hash", hex64(m.hash())},
           {"eta", d.eta},
           {"max_offdiag", d.max_offdiag},
           {"near_zero_threshold", d.near_zero_threshold},
           {"row_near_zero_fraction", d.row_near_zero_fraction},
           {"histogram", {{"lo", d.hist_lo}, {"hi", d.hist_hi}, {"counts", d.histogram}}}};
    write_text(a.json_out, j.dump(2) + "\n");
  }
  return 0;
}

// ---------------------------------------------------------------------------
// allocate

struct AllocateArgs {
  std::string image, out, trace;
  double ratio = 0.5;
  int block = 32;
  int window = 7;
  bool json = false;
};

void write_trace_csv(const BraTrace& t, const std::string& path) {
  std::ostringstream os;
  os.precision(12);
  os << "iteration,delta,excess,method,min_q,max_q\n";
  for (std::size_t i = 0; i < t.iterations.size(); ++i) {
    const auto& it = t.iterations[i];
    os << i + 1 << ',' << it.delta << ',' << it.excess << ',' << to_string(it.method) << ',' << it.sizes.minCoeff()
       << ',' << it.sizes.maxCoeff() << '\n';
  }
  write_text(path, os.str());
}

int run_allocate(const AllocateArgs& a, const Global& g) {
  const Image x = load_image(a.image);
  const int n = a.block * a.block;
  const Budget b = budget_for(a.ratio, 0.0, n);
  const Image canvas = pad_to_blocks(x, a.block);
  const auto res = bra(default_saliency(canvas, a.window), a.block, b.q, n, g.seed);
  if (!a.out.empty()) save_ratio_map(res.ratios, a.out);
  if (!a.trace.empty()) write_trace_csv(res.trace, a.trace);
  const auto& s = res.sizes.sizes;
  if (a.json) {
    print_json({{"image", a.image},
                {"grid", {s.rows(), s.cols()}},
                {"budget_q", b.q},
                {"bound_k", n},
                {"iterations", res.trace.count()},
                {"min_q", s.minCoeff()},
                {"max_q", s.maxCoeff()},
                {"total", res.sizes.total()}});
  } else {
    std::cout << "allocated " << s.rows() << "x" << s.cols() << " blocks, q=" << b.q << " K=" << n << ", "
              << res.trace.count() << " iterations, q_i in [" << s.minCoeff() << ", " << s.maxCoeff() << "]\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// simulate-bra

struct SimulateArgs {
  int blocks = 25;
  std::int64_t trials = 100000;
  int q = 512;
  int k = 1024;
  int horizon = 20;
  int limit = 16;
  std::string csv;
  bool json = false;
};

int run_simulate(const SimulateArgs& a, const Global& g) {
  if (a.q < 0 || a.q > a.k || a.blocks < 1 || a.trials < 1 || a.horizon < 1)
    throw RangeError("simulate-bra: need blocks >= 1, trials >= 1, horizon >= 1 and 0 <= q <= K");
  const auto c = simulate_convergence(a.blocks, a.trials, a.q, a.k, g.seed, a.horizon, a.limit);
  if (!a.csv.empty()) {
    std::ostringstream os;
    write_curves_csv(c, os);
    write_text(a.csv, os.str());
  }
  const double frac = static_cast<double>(c.converged_within_limit) / static_cast<double>(c.trials);
  const auto rises = c.mse_increases_after(1);
  if (a.json) {
    print_json({{"blocks", a.blocks},
                {"trials", a.trials},
                {"q", a.q},
                {"K", a.k},
                {"limit", a.limit},
                {"within_limit", frac},
                {"max_iterations", c.max_iterations},
                {"abs_delta_monotone", c.abs_delta_monotone_from(1)},
                {"mse_rises_at", rises},
                {"histogram", c.iteration_histogram}});
  } else {
    std::cout << "l=" << a.blocks << " trials=" << a.trials << ": " << 100.0 * frac << "% within " << a.limit
              << " iterations (max " << c.max_iterations << "), mean|delta| "
              << (c.abs_delta_monotone_from(1) ? "non-increasing" : "NOT monotone") << '\n';
    if (g.verbose)
      for (std::size_t t = 0; t < c.mean_abs_delta.size(); ++t)
        std::cerr << "  t=" << t + 1 << " mean|delta|=" << c.mean_abs_delta[t] << " mse=" << c.mean_mse[t] << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------
// sample

struct SampleArgs {
  std::string image, matrix, out, ratios_in, ratios_out;
  double ratio = 0.25;
  bool uniform = false;
  bool json = false;
};

int run_sample(const SampleArgs& a, const Global& g) {
  const Image x = load_image(a.image);
  const auto m = load_matrix(a.matrix);
  const BlockGrid grid = unfold(x, m.block_size(), Padding::reflect);
  const Budget b = budget_for(a.ratio, 0.0, m.n());
  BlockMeasurementSet meas;
  RatioMap used;
  std::string how;
  if (!a.ratios_in.empty()) {
    used = load_ratio_map(a.ratios_in);
    meas = sample_blocks(grid, m, to_size_map(used));
    how = "ratio map " + a.ratios_in;
  } else if (a.uniform) {
    meas = sample_uniform(grid, m, b.q);
    MeasurementSizeMap s{IntGrid::Constant(grid.grid_rows, grid.grid_cols, b.q), m.block_size(), b.q, m.n()};
    used = to_ratio_map(s);
    how = "uniform";
  } else {
    const auto res = bra(default_saliency(fold(grid, false)), m.block_size(), b.q, m.n(), g.seed);
    meas = sample_blocks(grid, m, res.sizes);
    used = res.ratios;
    how = "content-aware";
  }
  save_measurements(meas, a.out);
  if (!a.ratios_out.empty()) save_ratio_map(used, a.ratios_out);
  const auto bytes = kMeasurementHeaderBytes + 2 * meas.blocks.size() + 4 * meas.total_measurements();
  if (a.json)
    print_json({{"out", a.out},
                {"mode", how},
                {"blocks", meas.blocks.size()},
                {"measurements", meas.total_measurements()},
                {"bytes", bytes}});
  else
    std::cout << "sampled " << meas.blocks.size() << " blocks (" << how << "), " << meas.total_measurements()
              << " measurements, " << bytes << " bytes -> " << a.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// reconstruct

struct ReconstructArgs {
  std::vector<std::string> meas;
  std::string matrix, ratios, out, log;
  RecoveryArgs rec;
  bool json = false;
};

int run_reconstruct(const ReconstructArgs& a, const Global& g) {
  const auto m = load_matrix(a.matrix);
  std::vector<BlockMeasurementSet> parts;
  for (const auto& p : a.meas) parts.push_back(load_measurements(p));
  for (const auto& p : parts) check_compatible(p, m);
  // Sum of per-file initializations, in file order; merged set for recovery.
  Image initial = canvas_of(parts[0], m);
  BlockMeasurementSet combined = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) {
    initial += canvas_of(parts[i], m);
    combined = merge(combined, parts[i]);
  }
  RatioMap rmap;
  if (!a.ratios.empty()) {
    rmap = load_ratio_map(a.ratios);
  } else {
    auto cov = combined.coverage();
    cov.bound_k = m.n();
    cov.budget_q = static_cast<int>(std::llround(static_cast<double>(cov.total()) / std::max(1, cov.blocks())));
    rmap = to_ratio_map(cov);
  }
  const auto cfg = a.rec.build(g.seed);
  const auto res = reconstruct_from(initial, combined, m, rmap, cfg);
  save_image(res.image, a.out);
  if (!a.log.empty()) {
    std::ostringstream os;
    write_phase_csv(res.phases, os);
    write_text(a.log, os.str());
  }
  const double fid = res.phases.empty() ? 0.0 : res.phases.back().data_fidelity;
  if (a.json)
    print_json({{"out", a.out},
                {"height", res.image.rows()},
                {"width", res.image.cols()},
                {"phases", cfg.phases},
                {"prox", cfg.prox->name()},
                {"rte", cfg.rte},
                {"measurements", combined.total_measurements()},
                {"data_fidelity", fid}});
  else
    std::cout << "reconstructed " << res.image.rows() << "x" << res.image.cols() << " from "
              << combined.total_measurements() << " measurements, " << cfg.phases << " phases -> " << a.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// pipeline

struct PipelineArgs {
  std::string image, matrix, out, report, handoff, mode = "deployed";
  double ratio = 0.5;
  double gamma = kDefaultGamma;
  RecoveryArgs rec;
  bool json = false;

  ::json to_json(const Global& g) const {
    ::json p{{"image", image}, {"matrix", matrix}, {"ratio", ratio}, {"gamma", gamma}, {"mode", mode}};
    const ::json r = rec.to_json();
    for (const auto& [k, v] : r.items()) p[k] = v;
    return {{"seed", g.seed}, {"pipeline", p}};
  }
};

int run_pipeline_cmd(const PipelineArgs& a, const Global& g) {
  const Image x = load_image(a.image);
  const auto m = load_matrix(a.matrix);
  PipelineConfig cfg;
  cfg.ratio = a.ratio;
  cfg.gamma = a.gamma;
  cfg.mode = parse_mode(a.mode);
  cfg.seed = g.seed;
  cfg.recovery = a.rec.build(g.seed);
  const auto res = run_pipeline(x, m, cfg);
  if (!a.out.empty()) save_image(res.reconstruction, a.out);
  if (!a.handoff.empty()) write_handoff(res, a.handoff);
  const auto q = evaluate(fs::path(a.image).filename().string(), x, res.reconstruction);
  const json cfg_json = a.to_json(g);
  const auto hash = config_hash(cfg_json);
  json exchange = json::array();
  for (const auto& msg : res.log.messages) exchange.push_back({{"name", msg.name}, {"bytes", msg.payload.size()}});
  if (!a.report.empty()) {
    auto rep = json::parse(format_report({q}, ReportFormat::json, hash));
    rep["config"] = cfg_json;
    rep["budget"] = {{"n", res.budget.n}, {"q", res.budget.q}, {"q_basic", res.budget.q_basic}};
    rep["exchange"] = exchange;
    write_text(a.report, rep.dump(2) + "\n");
  }
  if (a.json) {
    print_json({{"mode", a.mode},
                {"psnr", std::isinf(q.psnr) ? json("inf") : json(q.psnr)},
                {"ssim", q.ssim},
                {"q", res.budget.q},
                {"q_basic", res.budget.q_basic},
                {"bytes", res.log.total_bytes()},
                {"config_hash", hash}});
  } else {
    std::cout << a.mode << " r=" << a.ratio << " gamma=" << a.gamma << " (q=" << res.budget.q
              << ", q_b=" << res.budget.q_basic << "): PSNR " << q.psnr << " dB, SSIM " << q.ssim << ", "
              << res.log.total_bytes() << " bytes exchanged\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// gamma-sweep

struct SweepArgs {
  std::string images, csv, matrix;
  std::vector<double> ratios{0.01, 0.04, 0.1, 0.25, 0.3, 0.4, 0.5};
  int grid = 21;
  int block = 32;
  RecoveryArgs rec;
  bool json = false;
};

int run_sweep(const SweepArgs& a, const Global& g) {
  std::vector<NamedImage> images;
  for (const auto& f : list_images(a.images)) images.push_back({f.filename().string(), load_image(f)});
  std::optional<GeneratingMatrix> m;
  if (!a.matrix.empty()) {
    m = load_matrix(a.matrix);
  } else {
    std::vector<Image> raw;
    for (const auto& im : images) raw.push_back(im.image);
    m = svd_init(patches_from_images(raw, a.block)).matrix;
    if (g.verbose) std::cerr << "learned N=" << m->n() << " matrix from the sweep images\n";
  }
  PipelineConfig base;
  base.seed = g.seed;
  base.recovery = a.rec.build(g.seed);
  const auto rows = gamma_sweep(images, a.ratios, a.grid, *m, base);
  if (!a.csv.empty()) {
    std::ostringstream os;
    write_sweep_csv(rows, os);
    write_text(a.csv, os.str());
  }
  // Best deployed gamma per ratio label.
  std::vector<std::pair<std::string, SweepRow>> best;
  for (const auto& r : rows) {
    if (r.mode != PipelineMode::deployed) continue;
    auto it = std::find_if(best.begin(), best.end(), [&](const auto& b) { return b.first == r.ratio; });
    if (it == best.end())
      best.emplace_back(r.ratio, r);
    else if (r.mean_psnr > it->second.mean_psnr)
      it->second = r;
  }
  if (a.json) {
    json out = json::array();
    for (const auto& r : rows)
      out.push_back({{"ratio", r.ratio},
                     {"gamma", r.gamma},
                     {"mode", to_string(r.mode)},
                     {"mean_psnr", r.mean_psnr},
                     {"mean_ssim", r.mean_ssim}});
    print_json({{"images", images.size()}, {"rows", out}});
  } else {
    std::cout << "swept " << images.size() << " images, " << a.ratios.size() << " ratios, " << a.grid
              << " gamma values\n";
    for (const auto& [label, r] : best)
      std::cout << "  r=" << label << ": best gamma " << r.gamma << " (" << r.mean_psnr << " dB)\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// selfcheck

struct SelfcheckArgs {
  bool quick = false;
  bool json = false;
};

int run_selfcheck(const SelfcheckArgs& a, const Global& g) {
  std::vector<PropertyReport> reports;
  DescentInstanceSpace space;
  space.instances = a.quick ? 300 : 10000;
  space.seed = g.seed + 1;
  reports.push_back(check_shape_convergence(space));
  reports.push_back(check_error_bound_exhaustive(a.quick ? 16 : 64, a.quick ? 4 : 8));
  reports.push_back(check_error_bound_sampled(1024, a.quick ? 20000 : 1000000, g.seed + 2));
  reports.push_back(check_round_bound(a.quick ? 16 : 64, a.quick ? 4 : 16));
  reports.push_back(check_error_monotone(space));
  reports.push_back(check_fixed_point_bound(space));

  // BRA exactness on random saliency maps.
  {
    PropertyReport r;
    r.name = "bra returns average q with q_i in [0, K]";
    Rng rng(g.seed + 3);
    std::normal_distribution<double> score(0.0, 2.0);
    std::uniform_int_distribution<int> pick_q(0, 64);
    for (int t = 0; t < (a.quick ? 50 : 500); ++t) {
      SaliencyMap s{Image(32, 48)};
      for (Eigen::Index i = 0; i < s.scores.size(); ++i) s.scores.data()[i] = score(rng);
      const int q = pick_q(rng);
      const auto res = bra(s, 8, q, 64, g.seed + t);
      ++r.cases;
      if (res.sizes.total() != static_cast<std::int64_t>(q) * res.sizes.blocks() || res.sizes.sizes.minCoeff() < 0 ||
          res.sizes.sizes.maxCoeff() > 64)
        r.fail("trial " + std::to_string(t));
    }
    reports.push_back(r);
  }

  // Learned matrix, codec and recovery wiring on a small synthetic image.
  {
    PropertyReport r;
    r.name = "matrix orthonormality, wire round trip, full-rate recovery";
    Image x(32, 24);
    Rng rng(g.seed + 4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
    std::vector<Image> corpus{x, x.transpose(), x.reverse()};
    const auto m = svd_init(patches_from_images(corpus, 4)).matrix;
    const auto d = orthogonality_report(m);
    ++r.cases;
    if (d.max_offdiag > 1e-10 || std::abs(d.eta - 1.0) > 1e-10) r.fail("A A^T is not the identity");
    const auto meas = sample_uniform(unfold(x, 4), m, m.n());
    const auto back = decode_measurements(encode_measurements(meas));
    ++r.cases;
    if (back.total_measurements() != meas.total_measurements() || back.matrix_hash != m.hash())
      r.fail("measurement file round trip");
    ++r.cases;
    if ((initialize(meas, m) - x).cwiseAbs().maxCoeff() > 1e-8) r.fail("full-rate recovery is not exact");
    reports.push_back(r);
  }

  const auto phase = check_multinomial_phase(25, a.quick ? 2000 : 100000, 512, 1024, g.seed + 5);

  bool ok = true;
  for (const auto& r : reports) ok = ok && r.ok();
  if (a.json) {
    json arr = json::array();
    for (const auto& r : reports)
      arr.push_back({{"name", r.name},
                     {"cases", r.cases},
                     {"violations", r.violations},
                     {"first_violation", r.first_violation}});
    print_json({{"ok", ok},
                {"checks", arr},
                {"random_phase",
                 {{"trials", phase.trials},
                  {"entered", phase.trials_in_phase},
                  {"sign_flips", phase.sign_flips},
                  {"increases", phase.increases},
                  {"stalls", phase.stalls}}}});
  } else {
    for (const auto& r : reports) {
      std::cout << (r.ok() ? "PASS " : "FAIL ") << r.name << " (" << r.cases << " cases";
      if (!r.ok()) std::cout << ", " << r.violations << " violations, first: " << r.first_violation;
      std::cout << ")\n";
    }
    std::cout << "INFO random correction phase: " << phase.trials_in_phase << "/" << phase.trials
              << " runs, sign flips " << phase.sign_flips << ", |delta| increases " << phase.increases << ", stalls "
              << phase.stalls << '\n';
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Content-aware block compressed sensing: matrices, allocation, sampling, recovery", "cascs"};
  app.require_subcommand(1);
  app.fallthrough();
  app.failure_message(CLI::FailureMessage::help);
  app.set_version_flag("--version", std::string(kVersion));

  Global g;
  app.add_option("--seed", g.seed, "seed for every random choice")->capture_default_str();
  app.add_option("--threads", g.threads, "worker cap (0 = all cores)")->envname("CASCS_THREADS");
  app.add_option("--config", g.config, "JSON config file; flags override it");
  app.add_flag("-v,--verbose", g.verbose, "more output on stderr");

  InitMatrixArgs init;
  auto* c_init = app.add_subcommand("init-matrix", "learn A_init from the blocks of a directory of images");
  c_init->add_option("--patches", init.patches, "image directory")->check(CLI::ExistingDirectory);
  c_init->add_option("--block", init.block, "block size B")->check(CLI::Range(1, 64))->capture_default_str();
  c_init->add_option("--out", init.out, "output matrix file (.casm)");
  c_init->add_option("--precision", init.precision, "stored precision")
      ->check(CLI::IsMember({"f32", "f64"}))
      ->capture_default_str();
  c_init->add_flag("--json", init.json, "JSON summary on stdout");

  AnalyzeArgs an;
  auto* c_an = app.add_subcommand("analyze-matrix", "orthogonality and sparsity diagnostics of a matrix");
  c_an->add_option("matrix", an.matrix, "matrix file (.casm)");
  c_an->add_option("--json", an.json_out, "write the full report to this JSON file");
  c_an->add_option("--bins", an.bins, "histogram bins")->check(CLI::PositiveNumber)->capture_default_str();

  AllocateArgs al;
  auto* c_al = app.add_subcommand("allocate", "saliency-driven block ratio allocation");
  c_al->add_option("--image", al.image, "input image");
  c_al->add_option("--ratio", al.ratio, "overall CS ratio")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  c_al->add_option("--block", al.block, "block size B")->check(CLI::Range(1, 64))->capture_default_str();
  c_al->add_option("--window", al.window, "local std window")->capture_default_str();
  c_al->add_option("--out", al.out, "ratio map JSON");
  c_al->add_option("--trace", al.trace, "per-iteration trace CSV");
  c_al->add_flag("--json", al.json, "JSON summary on stdout");

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate-bra", "convergence of the correction loop on random initial maps");
  c_sim->add_option("--blocks", sim.blocks, "number of blocks l")->capture_default_str();
  c_sim->add_option("--trials", sim.trials, "random initial states")->capture_default_str();
  c_sim->add_option("--q", sim.q, "target average q")->capture_default_str();
  c_sim->add_option("--K", sim.k, "per-block bound K")->capture_default_str();
  c_sim->add_option("--horizon", sim.horizon, "iterations recorded per curve")->capture_default_str();
  c_sim->add_option("--limit", sim.limit, "iteration limit counted as converged")->capture_default_str();
  c_sim->add_option("--csv", sim.csv, "curve CSV");
  c_sim->add_flag("--json", sim.json, "JSON summary on stdout");

  SampleArgs sa;
  auto* c_sa = app.add_subcommand("sample", "measure an image block by block");
  c_sa->add_option("--image", sa.image, "input image");
  c_sa->add_option("--matrix", sa.matrix, "generating matrix (.casm)");
  c_sa->add_option("--ratio", sa.ratio, "overall CS ratio")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  c_sa->add_flag("--uniform", sa.uniform, "same q for every block");
  c_sa->add_option("--ratios", sa.ratios_in, "sample with this ratio map instead of allocating");
  c_sa->add_option("--ratios-out", sa.ratios_out, "write the ratio map used");
  c_sa->add_option("--out", sa.out, "measurement file (.casy)");
  c_sa->add_flag("--json", sa.json, "JSON summary on stdout");

  ReconstructArgs re;
  auto* c_re = app.add_subcommand("reconstruct", "recover an image from measurement files");
  c_re->add_option("--meas", re.meas, "measurement files; several are merged in order");
  c_re->add_option("--matrix", re.matrix, "generating matrix (.casm)");
  c_re->add_option("--ratios", re.ratios, "ratio map JSON (default: from the measurement counts)");
  re.rec.add(c_re);
  c_re->add_option("--out", re.out, "output image (.pgm or .png)");
  c_re->add_option("--log", re.log, "per-phase diagnostics CSV");
  c_re->add_flag("--json", re.json, "JSON summary on stdout");

  PipelineArgs pi;
  auto* c_pi = app.add_subcommand("pipeline", "two-stage sampling and reconstruction");
  c_pi->add_option("--image", pi.image, "input image");
  c_pi->add_option("--matrix", pi.matrix, "generating matrix (.casm)");
  c_pi->add_option("--ratio", pi.ratio, "overall CS ratio")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  c_pi->add_option("--gamma", pi.gamma, "basic sampling fraction")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  c_pi->add_option("--mode", pi.mode, "deployed | ideal | uniform")
      ->check(CLI::IsMember({"deployed", "ideal", "uniform"}))
      ->capture_default_str();
  pi.rec.add(c_pi);
  c_pi->add_option("--out", pi.out, "output image");
  c_pi->add_option("--report", pi.report, "quality report JSON with the embedded config");
  c_pi->add_option("--handoff", pi.handoff, "directory for the exchanged messages");
  c_pi->add_flag("--json", pi.json, "JSON summary on stdout");

  SweepArgs sw;
  auto* c_sw = app.add_subcommand("gamma-sweep", "mean quality over gamma for a directory of images");
  c_sw->add_option("--images", sw.images, "image directory")->check(CLI::ExistingDirectory);
  c_sw->add_option("--ratios", sw.ratios, "comma separated ratios")->delimiter(',');
  c_sw->add_option("--grid", sw.grid, "number of gamma values in [0, 1]")->capture_default_str();
  c_sw->add_option("--matrix", sw.matrix, "generating matrix (default: learned from the images)");
  c_sw->add_option("--block", sw.block, "block size when learning the matrix")->capture_default_str();
  sw.rec.add(c_sw);
  c_sw->add_option("--csv", sw.csv, "sweep CSV");
  c_sw->add_flag("--json", sw.json, "JSON rows on stdout");

  SelfcheckArgs sc;
  auto* c_sc = app.add_subcommand("selfcheck", "run the allocation property suites on small instances");
  c_sc->add_flag("--quick", sc.quick, "smaller instance counts");
  c_sc->add_flag("--json", sc.json, "JSON results on stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    if (!g.config.empty()) apply_config(app, sub, g.config);
    if (sub == c_init) require(sub, {"--patches", "--out"});
    if (sub == c_an) require(sub, {"matrix"});
    if (sub == c_al) require(sub, {"--image"});
    if (sub == c_sa) require(sub, {"--image", "--matrix", "--out"});
    if (sub == c_re) require(sub, {"--meas", "--matrix", "--out"});
    if (sub == c_pi) require(sub, {"--image", "--matrix"});
    if (sub == c_sw) require(sub, {"--images"});
  } catch (const CLI::ParseError& e) {
    sub->exit(e);
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "cascs: error [" << error_kind(e) << "]: " << e.what() << '\n';
    return 1;
  }

  try {
    if (g.threads < 0) throw RangeError("--threads must be >= 0");
    set_num_threads(g.threads);
    if (sub == c_init) return run_init_matrix(init, g);
    if (sub == c_an) return run_analyze(an);
    if (sub == c_al) return run_allocate(al, g);
    if (sub == c_sim) return run_simulate(sim, g);
    if (sub == c_sa) return run_sample(sa, g);
    if (sub == c_re) return run_reconstruct(re, g);
    if (sub == c_pi) return run_pipeline_cmd(pi, g);
    if (sub == c_sw) return run_sweep(sw, g);
    if (sub == c_sc) return run_selfcheck(sc, g);
  } catch (const std::exception& e) {
    std::cerr << "cascs: error [" << error_kind(e) << "]: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
