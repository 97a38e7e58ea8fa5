#pragma once

#include "cascs/allocator.hpp"
#include "cascs/block_codec.hpp"
#include "cascs/matrix_bank.hpp"
#include "cascs/metrics.hpp"
#include "cascs/recovery.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace cascs {

enum class PipelineMode { deployed, ideal, uniform };
std::string to_string(PipelineMode m);
PipelineMode parse_mode(const std::string& s);

inline constexpr double kDefaultGamma = 0.2822;

struct PipelineConfig {
  double ratio = 0.5;
  double gamma = kDefaultGamma;
  PipelineMode mode = PipelineMode::deployed;
  std::uint64_t seed = 0;  ///< BRA random correction
  RecoveryConfig recovery;
  SaliencyDetector detector;  ///< empty selects the 7x7 local-std detector

  void validate() const;
};

/// Measurement budgets derived from (r, gamma, N): q = round(r N) per block
/// on average and q_b = round(gamma r N) basic rows per block.
struct Budget {
  int n = 0;
  int q = 0;
  int q_basic = 0;
  int residual_target() const { return q - q_basic; }
  int residual_bound() const { return n - q_basic; }
};

Budget budget_for(double ratio, double gamma, int n);

struct ExchangeMessage {
  std::string name;
  std::vector<std::uint8_t> payload;
};

/// Messages in protocol order.
struct ExchangeLog {
  std::vector<ExchangeMessage> messages;
  std::size_t total_bytes() const;
  const ExchangeMessage& find(const std::string& name) const;
};

/// The device side: holds the scene and answers sampling requests.
class SamplingEnd {
 public:
  SamplingEnd(const Image& image, const GeneratingMatrix& a);

  /// Stage 1: rows 1..q_b for every block, encoded as a measurement file.
  std::vector<std::uint8_t> basic_measurements(int q_basic);

  /// Stage 3: rows q_b+1..q_b+q_i^r for every block, given the residual ratio
  /// map request (JSON).
  std::vector<std::uint8_t> residual_measurements(const std::string& residual_request);

 private:
  const GeneratingMatrix& a_;
  BlockGrid grid_;
  std::optional<int> q_basic_;
};

/// The host side: allocation and recovery.
class ReconstructionEnd {
 public:
  ReconstructionEnd(const GeneratingMatrix& a, PipelineConfig config);

  /// Stage 2: transpose-initialize the basic measurements, detect saliency,
  /// allocate the residual budget. Returns the residual request (JSON).
  std::string receive_basic(const std::vector<std::uint8_t>& payload);

  /// Stage 4: combine both initializations and run recovery.
  ReconstructionResult receive_residual(const std::vector<std::uint8_t>& payload);

  const RatioMap& residual_ratios() const { return residual_ratios_; }
  const RatioMap& final_ratios() const { return final_ratios_; }
  const BlockMeasurementSet& combined_measurements() const { return combined_; }
  const Image& initial_canvas() const { return initial_; }
  const BraTrace& bra_trace() const { return trace_; }
  const Budget& budget() const { return budget_; }

 private:
  const GeneratingMatrix& a_;
  PipelineConfig config_;
  Budget budget_;
  BlockMeasurementSet basic_;
  Image basic_canvas_;
  RatioMap residual_ratios_;
  RatioMap final_ratios_;
  BlockMeasurementSet combined_;
  Image initial_;
  BraTrace trace_;
};

struct PipelineResult {
  Image reconstruction;
  RatioMap ratios;
  ExchangeLog log;
  BlockMeasurementSet measurements;  ///< as received, after f32 wire rounding
  Image initial;                     ///< transpose initialization, cropped
  std::vector<PhaseDiagnostics> phases;
  Budget budget;
};

PipelineResult run_deployed(const Image& image, const GeneratingMatrix& a, const PipelineConfig& cfg);
PipelineResult run_ideal(const Image& image, const GeneratingMatrix& a, const PipelineConfig& cfg);
PipelineResult run_uniform(const Image& image, const GeneratingMatrix& a, const PipelineConfig& cfg);

/// Dispatches on cfg.mode.
PipelineResult run_pipeline(const Image& image, const GeneratingMatrix& a, const PipelineConfig& cfg);

/// Writes every exchanged message plus the final ratio map into `dir`:
/// basic.casy, residual_request.json, residual.casy (deployed) or
/// measurements.casy (other modes), and ratios.json.
void write_handoff(const PipelineResult& result, const std::filesystem::path& dir);

struct NamedImage {
  std::string name;
  Image image;
};

struct SweepRow {
  std::string ratio;  ///< numeric, or "mean" for the average over ratios
  double gamma = 0.0;
  PipelineMode mode = PipelineMode::deployed;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
};

/// Deployed mode over gamma = i / (grid - 1), i = 0..grid-1, plus ideal and
/// uniform reference values repeated at every gamma.
std::vector<SweepRow> gamma_sweep(const std::vector<NamedImage>& images, const std::vector<double>& ratios, int grid,
                                  const GeneratingMatrix& a, const PipelineConfig& base);

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out);

}  // namespace cascs
