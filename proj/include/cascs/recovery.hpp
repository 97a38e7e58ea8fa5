#pragma once

#include "cascs/allocator.hpp"
#include "cascs/block_codec.hpp"
#include "cascs/matrix_bank.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

namespace cascs {

/// Denoising stage of a recovery phase. Maps (Z, R') to a residual image of
/// the same shape; the phase output is Z + residual.
class ProximalOperator {
 public:
  virtual ~ProximalOperator() = default;
  virtual Image residual(const Image& z, const Image& expanded_ratios) const = 0;
  virtual std::string name() const = 0;
};

/// Always returns zeros, so the phase output equals Z.
class ZeroResidualProx final : public ProximalOperator {
 public:
  Image residual(const Image& z, const Image& expanded_ratios) const override;
  std::string name() const override { return "zero"; }
};

/// Tile-wise orthonormal 2-D DCT with soft thresholding of every AC
/// coefficient. The threshold of a tile is base_threshold * mean(1 - R') over
/// the tile, so well-sampled regions are shrunk less. Tiles are aligned to the
/// image origin; edge tiles may be smaller.
class DctSoftThresholdProx final : public ProximalOperator {
 public:
  explicit DctSoftThresholdProx(double base_threshold, int tile = 8);

  Image residual(const Image& z, const Image& expanded_ratios) const override;
  std::string name() const override;

  /// Per-tile thresholds, one entry per tile (tile rows x tile cols).
  Eigen::MatrixXd thresholds(const Image& expanded_ratios) const;

  double base_threshold() const { return base_threshold_; }
  int tile() const { return tile_; }

 private:
  double base_threshold_;
  int tile_;
};

/// Orthonormal DCT-II matrix of size n (rows are basis functions).
Eigen::MatrixXd dct_matrix(int n);

double soft_threshold(double x, double lambda);

inline constexpr double kDefaultDctThreshold = 0.01;

/// Parses "zero", "dct" or "dct:lambda=0.01[,tile=8]". Plain "dct" uses
/// kDefaultDctThreshold.
std::shared_ptr<const ProximalOperator> make_prox(const std::string& spec);

/// One of the eight symmetries of the square: `quarter_turns`
/// counter-clockwise rotations applied after an optional left-right flip.
struct DihedralTransform {
  int quarter_turns = 0;
  bool flip = false;

  static std::array<DihedralTransform, 8> all();
  static DihedralTransform from_index(int index);
  int index() const { return quarter_turns + (flip ? 4 : 0); }
  bool preserves_shape() const { return quarter_turns % 2 == 0; }

  Image apply(const Image& x) const;
  Image invert(const Image& x) const;
  std::string name() const;
};

using PhaseFn = std::function<Image(const Image& z, const Image& expanded_ratios)>;

/// H~(phase(H(Z), H(R'))). Rotations by an odd number of quarter turns
/// require square inputs (ShapeError otherwise).
PhaseFn rte_wrap(PhaseFn phase, DihedralTransform transform);

struct RecoveryConfig {
  int phases = 13;
  /// Empty means 1.0 for every phase; otherwise one entry per phase.
  std::vector<double> step_sizes;
  std::shared_ptr<const ProximalOperator> prox;  ///< null selects dct with kDefaultDctThreshold
  bool rte = false;
  std::uint64_t rte_seed = 0;
  bool log = true;

  double step(int phase) const;
  void validate() const;
};

/// z_i = x_i - rho A_{q_i}^T (A_{q_i} x_i - y_i) per block. `xhat` is the
/// padded canvas (grid_rows * B by grid_cols * B). Blocks with no
/// measurements pass through.
Image block_gradient_step(const Image& xhat, const BlockMeasurementSet& meas, const GeneratingMatrix& a, double rho);

/// Z + op.residual(Z, R'). Throws InvariantError if the operator changes shape.
Image proximal_step(const Image& z, const Image& expanded_ratios, const ProximalOperator& op);

/// Sum over blocks of ||A_{q_i} x_i - y_i||^2 on the padded canvas.
double data_fidelity(const Image& xhat, const BlockMeasurementSet& meas, const GeneratingMatrix& a);

struct PhaseDiagnostics {
  int phase = 0;
  double step_size = 0.0;
  int transform = -1;  ///< dihedral index, -1 when RTE is off
  double data_fidelity = 0.0;
};

struct ReconstructionResult {
  Image image;                        ///< cropped to the original size
  Image canvas;                       ///< padded estimate
  std::vector<PhaseDiagnostics> phases;  ///< phase 0 is the initialization
};

/// Transpose initialization followed by `config.phases` rounds of block
/// gradient descent and proximal mapping.
ReconstructionResult reconstruct(const BlockMeasurementSet& meas, const GeneratingMatrix& a, const RatioMap& rmap,
                                 const RecoveryConfig& config);

/// Same, starting from a caller-supplied padded initial estimate.
ReconstructionResult reconstruct_from(const Image& initial_canvas, const BlockMeasurementSet& meas,
                                      const GeneratingMatrix& a, const RatioMap& rmap, const RecoveryConfig& config);

void write_phase_csv(const std::vector<PhaseDiagnostics>& phases, std::ostream& out);

}  // namespace cascs
