#include "cascs/pipeline.hpp"

#include "cascs/bytes.hpp"
#include "cascs/wire.hpp"

#include <cmath>
#include <sstream>

namespace cascs {

namespace {

SaliencyDetector detector_of(const PipelineConfig& cfg) {
  return cfg.detector ? cfg.detector : local_std_detector(7);
}

/// What the far end decodes: encode, then decode.
BlockMeasurementSet over_the_wire(const BlockMeasurementSet& meas, std::vector<std::uint8_t>* payload) {
  auto bytes = encode_measurements(meas);
  auto decoded = decode_measurements(bytes);
  if (payload) *payload = std::move(bytes);
  return decoded;
}

RatioMap uniform_ratios(const BlockGrid& grid, int q, int n) {
  MeasurementSizeMap m{IntGrid::Constant(grid.grid_rows, grid.grid_cols, q), grid.block_size, q, n};
  return to_ratio_map(m);
}

Image canvas_of(const BlockMeasurementSet& meas, const GeneratingMatrix& a) {
  auto g = layout_of(meas);
  g.blocks = initialize_blocks(meas, a);
  return fold(g, false);
}

PipelineResult finish(const ReconstructionResult& rec, const BlockMeasurementSet& meas, const GeneratingMatrix& a,
                      RatioMap ratios, ExchangeLog log, Budget budget) {
  PipelineResult out;
  out.reconstruction = rec.image;
  out.phases = rec.phases;
  out.ratios = std::move(ratios);
  out.log = std::move(log);
  out.measurements = meas;
  out.initial = initialize(meas, a);
  out.budget = budget;
  return out;
}

}  // namespace

std::string to_string(PipelineMode m) {
  switch (m) {
    case PipelineMode::deployed:
      return "deployed";
    case PipelineMode::ideal:
      return "ideal";
    case PipelineMode::uniform:
      return "uniform";
  }
  return "?";
}

PipelineMode parse_mode(const std::string& s) {
  if (s == "deployed") return PipelineMode::deployed;
  if (s == "ideal") return PipelineMode::ideal;
  if (s == "uniform") return PipelineMode::uniform;
  throw RangeError("unknown pipeline mode '" + s + "'");
}

void PipelineConfig::validate() const {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw RangeError("pipeline: ratio must be in [0, 1]");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw RangeError("pipeline: gamma must be in [0, 1]");
  recovery.validate();
}

Budget budget_for(double ratio, double gamma, int n) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw RangeError("ratio must be in [0, 1]");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw RangeError("gamma must be in [0, 1]");
  Budget b;
  b.n = n;
  b.q = static_cast<int>(std::lround(ratio * n));
  b.q_basic = static_cast<int>(std::lround(gamma * ratio * n));
  if (b.q_basic > b.q) b.q_basic = b.q;
  if (b.q > n) throw BudgetError("pipeline: q exceeds N");
  return b;
}

std::size_t ExchangeLog::total_bytes() const {
  std::size_t total = 0;
  for (const auto& m : messages) total += m.payload.size();
  return total;
}

const ExchangeMessage& ExchangeLog::find(const std::string& name) const {
  for (const auto& m : messages)
    if (m.name == name) return m;
  throw RangeError("exchange log has no message '" + name + "'");
}

SamplingEnd::SamplingEnd(const Image& image, const GeneratingMatrix& a)
    : a_(a), grid_(unfold(image, a.block_size(), Padding::reflect)) {}

std::vector<std::uint8_t> SamplingEnd::basic_measurements(int q_basic) {
  q_basic_ = q_basic;
  return encode_measurements(sample_uniform(grid_, a_, q_basic));
}

std::vector<std::uint8_t> SamplingEnd::residual_measurements(const std::string& residual_request) {
  if (!q_basic_) throw InvariantError("residual request received before basic sampling");
  const RatioMap rr = ratio_map_from_json(residual_request);
  if (rr.block_size != grid_.block_size || rr.grid_rows() != grid_.grid_rows || rr.grid_cols() != grid_.grid_cols)
    throw ShapeError("residual request does not match the block grid");
  MeasurementSizeMap totals = to_size_map(rr);
  totals.sizes.array() += *q_basic_;
  totals.bound_k = a_.n();
  return encode_measurements(residual_sample_blocks(grid_, a_, *q_basic_, totals));
}

ReconstructionEnd::ReconstructionEnd(const GeneratingMatrix& a, PipelineConfig config)
    : a_(a), config_(std::move(config)), budget_(budget_for(config_.ratio, config_.gamma, a.n())) {
  config_.validate();
}

std::string ReconstructionEnd::receive_basic(const std::vector<std::uint8_t>& payload) {
  basic_ = decode_measurements(payload);
  for (const auto& b : basic_.blocks)
    if (b.first_row != 0 || b.count() != budget_.q_basic)
      throw FormatError("basic measurements do not match the expected basic budget");
  basic_canvas_ = canvas_of(basic_, a_);
  const SaliencyMap s = detector_of(config_)(basic_canvas_);
  BraResult r = bra(s, a_.block_size(), budget_.residual_target(), budget_.residual_bound(), config_.seed);
  residual_ratios_ = r.ratios;
  trace_ = std::move(r.trace);
  return ratio_map_to_json(residual_ratios_);
}

ReconstructionResult ReconstructionEnd::receive_residual(const std::vector<std::uint8_t>& payload) {
  const BlockMeasurementSet residual = decode_measurements(payload);
  combined_ = merge(basic_, residual);
  initial_ = basic_canvas_ + canvas_of(residual, a_);
  MeasurementSizeMap totals = to_size_map(residual_ratios_);
  totals.sizes.array() += budget_.q_basic;
  totals.budget_q = budget_.q;
  totals.bound_k = a_.n();
  final_ratios_ = to_ratio_map(totals);
  return reconstruct_from(initial_, combined_, a_, final_ratios_, config_.recovery);
}

PipelineResult run_deployed(const Image& image, const GeneratingMatrix& a, const PipelineConfig& cfg) {
  cfg.validate();
  SamplingEnd device(image, a);
  ReconstructionEnd host(a, cfg);
  ExchangeLog log;

  auto basic = device.basic_measurements(host.budget().q_basic);
  log.messages.push_back({"basic_measurements", basic});
  const std::string request = host.receive_basic(basic);
  log.messages.push_back({"residual_request", std::vector<std::uint8_t>(request.begin(), request.end())});
  auto residual = device.residual_measurements(request);
  log.messages.push_back({"residual_measurements", residual});
  const ReconstructionResult rec = host.receive_residual(residual);

  PipelineResult out = finish(rec, host.combined_measurements(), a, host.final_ratios(), std::move(log), host.budget());
  out.initial = host.initial_canvas().topLeftCorner(image.rows(), image.cols());
  return out;
}

PipelineResult run_ideal(const Image& image, const GeneratingMatrix& a, const PipelineConfig& cfg) {
  cfg.validate();
  const Budget budget = budget_for(cfg.ratio, 0.0, a.n());
  const BlockGrid grid = unfold(image, a.block_size(), Padding::reflect);
  const SaliencyMap s = detector_of(cfg)(fold(grid, false));
  const BraResult alloc = bra(s, a.block_size(), budget.q, a.n(), cfg.seed);
  ExchangeLog log;
  std::vector<std::uint8_t> payload;
  const auto meas = over_the_wire(sample_blocks(grid, a, alloc.sizes), &payload);
  log.messages.push_back({"measurements", std::move(payload)});
  const auto rec = reconstruct(meas, a, alloc.ratios, cfg.recovery);
  return finish(rec, meas, a, alloc.ratios, std::move(log), budget);
}

PipelineResult run_uniform(const Image& image, const GeneratingMatrix& a, const PipelineConfig& cfg) {
  cfg.validate();
  const Budget budget = budget_for(cfg.ratio, 0.0, a.n());
  const BlockGrid grid = unfold(image, a.block_size(), Padding::reflect);
  ExchangeLog log;
  std::vector<std::uint8_t> payload;
  const auto meas = over_the_wire(sample_uniform(grid, a, budget.q), &payload);
  log.messages.push_back({"measurements", std::move(payload)});
  const RatioMap ratios = uniform_ratios(grid, budget.q, a.n());
  const auto rec = reconstruct(meas, a, ratios, cfg.recovery);
  return finish(rec, meas, a, ratios, std::move(log), budget);
}

PipelineResult run_pipeline(const Image& image, const GeneratingMatrix& a, const PipelineConfig& cfg) {
  switch (cfg.mode) {
    case PipelineMode::deployed:
      return run_deployed(image, a, cfg);
    case PipelineMode::ideal:
      return run_ideal(image, a, cfg);
    case PipelineMode::uniform:
      return run_uniform(image, a, cfg);
  }
  throw InvariantError("unreachable pipeline mode");
}

void write_handoff(const PipelineResult& result, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (const auto& m : result.log.messages) {
    std::string file;
    if (m.name == "basic_measurements")
      file = "basic.casy";
    else if (m.name == "residual_request")
      file = "residual_request.json";
    else if (m.name == "residual_measurements")
      file = "residual.casy";
    else
      file = m.name + ".casy";
    write_file_atomic(dir / file, m.payload);
  }
  save_ratio_map(result.ratios, dir / "ratios.json");
}

std::vector<SweepRow> gamma_sweep(const std::vector<NamedImage>& images, const std::vector<double>& ratios, int grid,
                                  const GeneratingMatrix& a, const PipelineConfig& base) {
  if (grid < 2) throw RangeError("gamma sweep: grid needs at least 2 points");
  if (images.empty()) throw RangeError("gamma sweep: no images");
  std::vector<double> gammas;
  for (int i = 0; i < grid; ++i) gammas.push_back(static_cast<double>(i) / (grid - 1));

  struct Mean {
    double psnr = 0.0, ssim = 0.0;
  };
  auto mean_over = [&](PipelineMode mode, double ratio, double gamma) {
    Mean m;
    for (const auto& im : images) {
      PipelineConfig cfg = base;
      cfg.mode = mode;
      cfg.ratio = ratio;
      cfg.gamma = gamma;
      const auto res = run_pipeline(im.image, a, cfg);
      const auto q = evaluate(im.name, im.image, res.reconstruction);
      m.psnr += q.psnr;
      m.ssim += q.ssim;
    }
    m.psnr /= static_cast<double>(images.size());
    m.ssim /= static_cast<double>(images.size());
    return m;
  };

  std::vector<SweepRow> rows;
  std::vector<Mean> dep_total(gammas.size()), ideal_total(1), uni_total(1);
  for (double r : ratios) {
    std::ostringstream label;
    label << r;
    const Mean ideal = mean_over(PipelineMode::ideal, r, 0.0);
    const Mean uni = mean_over(PipelineMode::uniform, r, 0.0);
    ideal_total[0].psnr += ideal.psnr;
    ideal_total[0].ssim += ideal.ssim;
    uni_total[0].psnr += uni.psnr;
    uni_total[0].ssim += uni.ssim;
    for (std::size_t g = 0; g < gammas.size(); ++g) {
      const Mean dep = mean_over(PipelineMode::deployed, r, gammas[g]);
      dep_total[g].psnr += dep.psnr;
      dep_total[g].ssim += dep.ssim;
      rows.push_back({label.str(), gammas[g], PipelineMode::deployed, dep.psnr, dep.ssim});
      rows.push_back({label.str(), gammas[g], PipelineMode::ideal, ideal.psnr, ideal.ssim});
      rows.push_back({label.str(), gammas[g], PipelineMode::uniform, uni.psnr, uni.ssim});
    }
  }
  const double nr = static_cast<double>(ratios.size());
  for (std::size_t g = 0; g < gammas.size(); ++g) {
    rows.push_back({"mean", gammas[g], PipelineMode::deployed, dep_total[g].psnr / nr, dep_total[g].ssim / nr});
    rows.push_back({"mean", gammas[g], PipelineMode::ideal, ideal_total[0].psnr / nr, ideal_total[0].ssim / nr});
    rows.push_back({"mean", gammas[g], PipelineMode::uniform, uni_total[0].psnr / nr, uni_total[0].ssim / nr});
  }
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out) {
  out << "ratio,gamma,mode,mean_psnr,mean_ssim\n";
  out.precision(12);
  for (const auto& r : rows)
    out << r.ratio << ',' << r.gamma << ',' << to_string(r.mode) << ',' << r.mean_psnr << ',' << r.mean_ssim << '\n';
}

}  // namespace cascs
