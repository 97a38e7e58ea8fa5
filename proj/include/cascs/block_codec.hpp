#pragma once

#include "cascs/allocator.hpp"
#include "cascs/matrix_bank.hpp"
#include "cascs/types.hpp"

#include <cstdint>
#include <vector>

namespace cascs {

enum class Padding { none, reflect };

/// An image cut into l = (H/B)(W/B) non-overlapping B x B blocks.
///
/// Block k sits at block row k / grid_cols, block column k % grid_cols
/// (row-major block order). Inside a block, pixels are vectorized
/// column-major: x[c * B + r] = block(r, c).
struct BlockGrid {
  int height = 0;  ///< original (unpadded) size
  int width = 0;
  int block_size = 0;
  int grid_rows = 0;
  int grid_cols = 0;
  /// N x l, one vectorized block per column.
  Eigen::MatrixXd blocks;

  int n() const { return block_size * block_size; }
  int count() const { return grid_rows * grid_cols; }
  int padded_height() const { return grid_rows * block_size; }
  int padded_width() const { return grid_cols * block_size; }
};

/// With Padding::reflect, sizes that are not multiples of B are reflect padded
/// up to the next multiple; otherwise they raise ShapeError.
BlockGrid unfold(const Image& image, int block_size, Padding padding = Padding::none);

/// Inverse of unfold. Crops back to the original size unless crop is false.
Image fold(const BlockGrid& grid, bool crop = true);

/// Reflect pads to multiples of B (no-op when already divisible).
Image pad_to_blocks(const Image& image, int block_size);

struct BlockMeasurement {
  int first_row = 0;  ///< 0-based first row of A that produced values(0)
  Vector values;

  int count() const { return static_cast<int>(values.size()); }
};

/// Per-block measurements of heterogeneous lengths. Block order matches BlockGrid.
struct BlockMeasurementSet {
  int height = 0;
  int width = 0;
  int block_size = 0;
  int grid_rows = 0;
  int grid_cols = 0;
  std::uint64_t matrix_hash = 0;
  std::vector<BlockMeasurement> blocks;

  std::int64_t total_measurements() const;
  /// Number of rows each block has been sampled with, counting from row 1;
  /// i.e. first_row + count for each block.
  MeasurementSizeMap coverage() const;
};

BlockMeasurementSet sample_blocks(const BlockGrid& grid, const GeneratingMatrix& a, const MeasurementSizeMap& qmap);

/// y_i = A[q_b+1 : q_i] x_i where q_i are the totals in qmap.
BlockMeasurementSet residual_sample_blocks(const BlockGrid& grid, const GeneratingMatrix& a, int q_basic,
                                           const MeasurementSizeMap& qmap);

/// Every block sampled with the same q rows.
BlockMeasurementSet sample_uniform(const BlockGrid& grid, const GeneratingMatrix& a, int q);

/// x_i = A_slice^T y_i per block, as an N x l block matrix.
Eigen::MatrixXd initialize_blocks(const BlockMeasurementSet& meas, const GeneratingMatrix& a);

/// Transpose initialization folded back to the original H x W.
Image initialize(const BlockMeasurementSet& meas, const GeneratingMatrix& a);

/// Concatenates a basic set (rows 1..q_b) with its residual set
/// (rows q_b+1..q_i) into one set sampled from row 1.
BlockMeasurementSet merge(const BlockMeasurementSet& basic, const BlockMeasurementSet& residual);

/// Throws unless meas and a describe the same grid and matrix.
void check_compatible(const BlockMeasurementSet& meas, const GeneratingMatrix& a);

/// Empty grid with the layout of `meas`, for folding block matrices.
BlockGrid layout_of(const BlockMeasurementSet& meas);

}  // namespace cascs
