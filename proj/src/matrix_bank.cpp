#include "cascs/matrix_bank.hpp"

#include "cascs/bytes.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cascs {

namespace {

std::uint64_t hash_rows(const RowMatrix& rows) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(rows.rows()));
  for (Eigen::Index i = 0; i < rows.size(); ++i) w.f64(rows.data()[i]);
  return fnv1a64(w.bytes());
}

int block_size_for(std::int64_t n) {
  const auto b = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
  if (static_cast<std::int64_t>(b) * b != n) throw ShapeError("N=" + std::to_string(n) + " is not a perfect square");
  return b;
}

/// Makes each row sum non-negative; rows summing to ~0 get a positive leading entry.
void normalize_signs(RowMatrix& rows) {
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const double sum = rows.row(i).sum();
    double sign = 1.0;
    if (std::abs(sum) > 1e-10) {
      sign = sum < 0 ? -1.0 : 1.0;
    } else {
      for (Eigen::Index j = 0; j < rows.cols(); ++j) {
        if (std::abs(rows(i, j)) > 1e-12) {
          sign = rows(i, j) < 0 ? -1.0 : 1.0;
          break;
        }
      }
    }
    if (sign < 0) rows.row(i) *= -1.0;
  }
}

SvdInitResult from_eigen_gram(const Eigen::MatrixXd& gram, int block_size) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  if (es.info() != Eigen::Success) throw Error("svd_init: eigendecomposition did not converge");
  const auto n = gram.rows();
  RowMatrix rows(n, n);
  Vector sigma(n);
  // Eigen sorts ascending; the bank wants descending importance.
  for (Eigen::Index k = 0; k < n; ++k) {
    rows.row(k) = es.eigenvectors().col(n - 1 - k).transpose();
    sigma(k) = std::sqrt(std::max(0.0, es.eigenvalues()(n - 1 - k)));
  }
  normalize_signs(rows);
  return {GeneratingMatrix(std::move(rows), block_size), std::move(sigma)};
}

}  // namespace

GeneratingMatrix::GeneratingMatrix(RowMatrix rows, int block_size)
    : rows_(std::move(rows)), block_size_(block_size) {
  if (block_size_ <= 0) throw ShapeError("block size must be positive");
  const auto n = static_cast<Eigen::Index>(block_size_) * block_size_;
  if (rows_.rows() != n || rows_.cols() != n)
    throw ShapeError("generating matrix must be " + std::to_string(n) + "x" + std::to_string(n));
  if (!rows_.allFinite()) throw RangeError("generating matrix has non-finite entries");
  hash_ = hash_rows(rows_);
}

SamplingMatrixView GeneratingMatrix::truncate(int q) const {
  if (q < 0 || q > n()) throw RangeError("truncate: q=" + std::to_string(q) + " outside [0, " + std::to_string(n()) + "]");
  return rows_.middleRows(0, q);
}

SamplingMatrixView GeneratingMatrix::slice(int from, int to) const {
  if (from < 1 || from > to + 1 || to > n())
    throw RangeError("slice: rows " + std::to_string(from) + ".." + std::to_string(to) + " invalid for N=" +
                     std::to_string(n()));
  return rows_.middleRows(from - 1, to - from + 1);
}

SamplingMatrixView GeneratingMatrix::rows_range(int first, int count) const {
  if (first < 0 || count < 0 || first + count > n())
    throw RangeError("row range [" + std::to_string(first) + ", " + std::to_string(first + count) +
                     ") invalid for N=" + std::to_string(n()));
  return rows_.middleRows(first, count);
}

void PatchDataset::validate() const {
  if (block_size <= 0) throw ShapeError("patch dataset: block size must be positive");
  if (columns.rows() != static_cast<Eigen::Index>(block_size) * block_size)
    throw ShapeError("patch dataset: columns must have length B^2");
  if (!columns.allFinite()) throw RangeError("patch dataset: non-finite values");
  if (columns.size() > 0 && (columns.minCoeff() < 0.0 || columns.maxCoeff() > 1.0))
    throw RangeError("patch dataset: values outside [0, 1]");
}

PatchDataset patches_from_images(std::span<const Image> images, int block_size) {
  if (block_size <= 0) throw ShapeError("block size must be positive");
  const Eigen::Index n = static_cast<Eigen::Index>(block_size) * block_size;
  Eigen::Index total = 0;
  for (const auto& im : images) total += (im.rows() / block_size) * (im.cols() / block_size);
  PatchDataset out{block_size, Eigen::MatrixXd(n, total)};
  Eigen::Index k = 0;
  for (const auto& im : images) {
    for (Eigen::Index br = 0; br + block_size <= im.rows(); br += block_size)
      for (Eigen::Index bc = 0; bc + block_size <= im.cols(); bc += block_size) {
        Eigen::MatrixXd blk = im.block(br, bc, block_size, block_size);
        out.columns.col(k++) = Eigen::Map<const Vector>(blk.data(), n);
      }
  }
  return out;
}

GramAccumulator::GramAccumulator(int block_size) : block_size_(block_size) {
  if (block_size <= 0) throw ShapeError("block size must be positive");
  const Eigen::Index n = static_cast<Eigen::Index>(block_size) * block_size;
  gram_ = Eigen::MatrixXd::Zero(n, n);
}

void GramAccumulator::add(const Vector& block) {
  if (block.size() != gram_.rows()) throw ShapeError("gram: block length mismatch");
  gram_.selfadjointView<Eigen::Lower>().rankUpdate(block);
  ++count_;
}

void GramAccumulator::add_image(const Image& image) {
  const Eigen::Index n = gram_.rows();
  // Batch the rank updates per image.
  const auto br = image.rows() / block_size_;
  const auto bc = image.cols() / block_size_;
  if (br * bc == 0) return;
  Eigen::MatrixXd cols(n, br * bc);
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < br; ++r)
    for (Eigen::Index c = 0; c < bc; ++c) {
      Eigen::MatrixXd blk = image.block(r * block_size_, c * block_size_, block_size_, block_size_);
      cols.col(k++) = Eigen::Map<const Vector>(blk.data(), n);
    }
  gram_.selfadjointView<Eigen::Lower>().rankUpdate(cols);
  count_ += k;
}

SvdInitResult svd_init(const GramAccumulator& gram) {
  const auto n = gram.gram().rows();
  if (gram.count() < n)
    throw BudgetError("svd_init: need at least N=" + std::to_string(n) + " blocks, got " + std::to_string(gram.count()));
  Eigen::MatrixXd full = gram.gram().selfadjointView<Eigen::Lower>();
  return from_eigen_gram(full, gram.block_size());
}

SvdInitResult svd_init(const PatchDataset& data) {
  data.validate();
  const auto n = data.columns.rows();
  if (data.count() < n)
    throw BudgetError("svd_init: need at least N=" + std::to_string(n) + " blocks, got " + std::to_string(data.count()));
  if (data.count() > 32 * n) {
    Eigen::MatrixXd gram = data.columns * data.columns.transpose();
    return from_eigen_gram(gram, data.block_size);
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(data.columns, Eigen::ComputeThinU);
  if (svd.info() != Eigen::Success) throw Error("svd_init: SVD did not converge");
  RowMatrix rows = svd.matrixU().transpose();
  normalize_signs(rows);
  return {GeneratingMatrix(std::move(rows), data.block_size), svd.singularValues()};
}

MatrixDiagnostics orthogonality_report(const GeneratingMatrix& a, int histogram_bins) {
  const auto& m = a.rows();
  MatrixDiagnostics d;
  d.n = a.n();
  const Eigen::MatrixXd aat = m * m.transpose();
  d.eta = aat.diagonal().mean();
  if (d.eta > 0) {
    Eigen::MatrixXd normalized = aat / d.eta;
    normalized.diagonal().setZero();
    d.max_offdiag = normalized.cwiseAbs().maxCoeff();
  }
  const double max_abs = m.cwiseAbs().maxCoeff();
  d.near_zero_threshold = 1e-3 * max_abs;
  d.row_near_zero_fraction.resize(static_cast<std::size_t>(d.n));
  for (int i = 0; i < d.n; ++i) {
    const auto zeros = (m.row(i).array().abs() < d.near_zero_threshold).count();
    d.row_near_zero_fraction[static_cast<std::size_t>(i)] = static_cast<double>(zeros) / d.n;
  }
  histogram_bins = std::max(1, histogram_bins);
  d.hist_lo = m.minCoeff();
  d.hist_hi = m.maxCoeff();
  d.histogram.assign(static_cast<std::size_t>(histogram_bins), 0);
  const double width = (d.hist_hi - d.hist_lo) / histogram_bins;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    int bin = width > 0 ? static_cast<int>((m.data()[i] - d.hist_lo) / width) : 0;
    bin = std::clamp(bin, 0, histogram_bins - 1);
    ++d.histogram[static_cast<std::size_t>(bin)];
  }
  return d;
}

std::vector<std::uint8_t> encode_matrix(const GeneratingMatrix& a, Precision precision) {
  ByteWriter w;
  w.magic("CASM");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(a.n()));
  w.u8(static_cast<std::uint8_t>(precision));
  const auto& m = a.rows();
  w.bytes().reserve(kMatrixHeaderBytes + static_cast<std::size_t>(m.size()) * static_cast<std::size_t>(precision));
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (precision == Precision::f32)
      w.f32(static_cast<float>(m.data()[i]));
    else
      w.f64(m.data()[i]);
  }
  return w.take();
}

GeneratingMatrix decode_matrix(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "matrix file");
  r.expect_magic("CASM");
  const auto version = r.u32();
  if (version != 1) throw FormatError("matrix file: unsupported version " + std::to_string(version));
  const auto n = r.u32();
  const auto flag = r.u8();
  if (flag != 4 && flag != 8) throw FormatError("matrix file: bad precision flag " + std::to_string(flag));
  const std::uint64_t entries = static_cast<std::uint64_t>(n) * n;
  if (r.remaining() < entries * flag)
    throw FormatError("matrix file: truncated payload (header declares N=" + std::to_string(n) + ")");
  if (r.remaining() > entries * flag)
    throw FormatError("matrix file: payload longer than header declares (N=" + std::to_string(n) + ")");
  const int b = block_size_for(n);
  RowMatrix rows(n, n);
  for (std::uint64_t i = 0; i < entries; ++i)
    rows.data()[i] = flag == 4 ? static_cast<double>(r.f32()) : r.f64();
  return GeneratingMatrix(std::move(rows), b);
}

void save_matrix(const GeneratingMatrix& a, const std::filesystem::path& path, Precision precision) {
  write_file_atomic(path, encode_matrix(a, precision));
}

GeneratingMatrix load_matrix(const std::filesystem::path& path) { return decode_matrix(read_file(path)); }

}  // namespace cascs
