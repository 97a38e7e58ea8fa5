#pragma once

#include "cascs/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace cascs {

/// Rows [first, first + count) of a generating matrix. Zero-copy.
using SamplingMatrixView = Eigen::Block<const RowMatrix, Eigen::Dynamic, Eigen::Dynamic, true>;

/// The N x N bank of measurement bases, rows ordered by descending
/// importance. Every sampling matrix A_q is a prefix of it. Immutable once
/// built, so it can be shared freely between threads.
class GeneratingMatrix {
 public:
  GeneratingMatrix(RowMatrix rows, int block_size);

  int n() const { return static_cast<int>(rows_.rows()); }
  int block_size() const { return block_size_; }
  const RowMatrix& rows() const { return rows_; }

  /// First q rows (A_q). Throws RangeError unless 0 <= q <= N.
  SamplingMatrixView truncate(int q) const;

  /// Rows from..to inclusive, 1-based. from == to + 1 is an empty slice.
  SamplingMatrixView slice(int from, int to) const;

  /// 0-based half-open range, used internally by the codec.
  SamplingMatrixView rows_range(int first, int count) const;

  /// FNV-1a over N and the f64 payload; identifies A inside measurement files.
  std::uint64_t hash() const { return hash_; }

 private:
  RowMatrix rows_;
  int block_size_;
  std::uint64_t hash_;
};

/// Vectorized B x B luminance blocks (column-major within each block).
struct PatchDataset {
  int block_size = 0;
  /// N x count, one block per column.
  Eigen::MatrixXd columns;

  int count() const { return static_cast<int>(columns.cols()); }
  void validate() const;
};

/// Cuts every image into non-overlapping B x B blocks (remainder discarded).
PatchDataset patches_from_images(std::span<const Image> images, int block_size);

/// Streaming Gram accumulator D D^T for corpora too large to hold as D.
class GramAccumulator {
 public:
  explicit GramAccumulator(int block_size);
  void add(const Vector& block);
  void add_image(const Image& image);
  long count() const { return count_; }
  int block_size() const { return block_size_; }
  const Eigen::MatrixXd& gram() const { return gram_; }

 private:
  int block_size_;
  Eigen::MatrixXd gram_;
  long count_ = 0;
};

struct SvdInitResult {
  GeneratingMatrix matrix;
  /// sigma_1 >= ... >= sigma_N of the data matrix D.
  Vector singular_values;
};

/// A_init = U^T for D = U S V^T. Dense SVD on D for moderate sizes, Gram
/// eigendecomposition otherwise (same U). Row signs are normalized so that
/// each row sums to a non-negative value.
SvdInitResult svd_init(const PatchDataset& data);
SvdInitResult svd_init(const GramAccumulator& gram);

struct MatrixDiagnostics {
  int n = 0;
  double eta = 0.0;                 ///< mean diagonal of A A^T
  double max_offdiag = 0.0;         ///< of (A / sqrt(eta))(A / sqrt(eta))^T
  double near_zero_threshold = 0.0; ///< 1e-3 * max |a_ij|
  std::vector<double> row_near_zero_fraction;
  double hist_lo = 0.0;
  double hist_hi = 0.0;
  std::vector<std::int64_t> histogram;
};

MatrixDiagnostics orthogonality_report(const GeneratingMatrix& a, int histogram_bins = 64);

enum class Precision : std::uint8_t { f32 = 4, f64 = 8 };

/// "CASM" | u32 version | u32 N | u8 precision | N*N little-endian entries.
std::vector<std::uint8_t> encode_matrix(const GeneratingMatrix& a, Precision precision = Precision::f64);
GeneratingMatrix decode_matrix(std::span<const std::uint8_t> bytes);

void save_matrix(const GeneratingMatrix& a, const std::filesystem::path& path,
                 Precision precision = Precision::f64);
GeneratingMatrix load_matrix(const std::filesystem::path& path);

inline constexpr std::size_t kMatrixHeaderBytes = 4 + 4 + 4 + 1;

}  // namespace cascs
