#include "cascs/block_codec.hpp"

#include "cascs/parallel.hpp"

#include <string>

namespace cascs {

namespace {

Eigen::Index reflect_index(Eigen::Index i, Eigen::Index n) {
  if (n == 1) return 0;
  const Eigen::Index period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

void check_qmap(const BlockGrid& grid, const GeneratingMatrix& a, const MeasurementSizeMap& qmap) {
  if (a.block_size() != grid.block_size)
    throw ShapeError("matrix block size " + std::to_string(a.block_size()) + " does not match grid block size " +
                     std::to_string(grid.block_size));
  if (qmap.sizes.rows() != grid.grid_rows || qmap.sizes.cols() != grid.grid_cols)
    throw ShapeError("measurement size map grid does not match the block grid");
}

BlockMeasurementSet empty_set_like(const BlockGrid& grid, const GeneratingMatrix& a) {
  BlockMeasurementSet s;
  s.height = grid.height;
  s.width = grid.width;
  s.block_size = grid.block_size;
  s.grid_rows = grid.grid_rows;
  s.grid_cols = grid.grid_cols;
  s.matrix_hash = a.hash();
  s.blocks.resize(static_cast<std::size_t>(grid.count()));
  return s;
}

}  // namespace

Image pad_to_blocks(const Image& image, int block_size) {
  if (block_size <= 0) throw ShapeError("block size must be positive");
  const auto h = image.rows();
  const auto w = image.cols();
  const auto ph = (h + block_size - 1) / block_size * block_size;
  const auto pw = (w + block_size - 1) / block_size * block_size;
  if (ph == h && pw == w) return image;
  Image out(ph, pw);
  for (Eigen::Index c = 0; c < pw; ++c)
    for (Eigen::Index r = 0; r < ph; ++r) out(r, c) = image(reflect_index(r, h), reflect_index(c, w));
  return out;
}

BlockGrid unfold(const Image& image, int block_size, Padding padding) {
  if (block_size <= 0) throw ShapeError("block size must be positive");
  if (image.size() == 0) throw ShapeError("unfold: empty image");
  const bool divisible = image.rows() % block_size == 0 && image.cols() % block_size == 0;
  if (!divisible && padding == Padding::none)
    throw ShapeError("image " + std::to_string(image.rows()) + "x" + std::to_string(image.cols()) +
                     " is not divisible by block size " + std::to_string(block_size));
  const Image padded = divisible ? image : pad_to_blocks(image, block_size);
  BlockGrid g;
  g.height = static_cast<int>(image.rows());
  g.width = static_cast<int>(image.cols());
  g.block_size = block_size;
  g.grid_rows = static_cast<int>(padded.rows() / block_size);
  g.grid_cols = static_cast<int>(padded.cols() / block_size);
  g.blocks.resize(g.n(), g.count());
  for (int k = 0; k < g.count(); ++k) {
    const int br = k / g.grid_cols;
    const int bc = k % g.grid_cols;
    const Eigen::MatrixXd blk = padded.block(br * block_size, bc * block_size, block_size, block_size);
    g.blocks.col(k) = Eigen::Map<const Vector>(blk.data(), g.n());
  }
  return g;
}

Image fold(const BlockGrid& grid, bool crop) {
  const int b = grid.block_size;
  if (grid.blocks.rows() != grid.n() || grid.blocks.cols() != grid.count())
    throw ShapeError("fold: block matrix does not match the grid layout");
  Image out(grid.padded_height(), grid.padded_width());
  for (int k = 0; k < grid.count(); ++k) {
    const int br = k / grid.grid_cols;
    const int bc = k % grid.grid_cols;
    out.block(br * b, bc * b, b, b) = Eigen::Map<const Eigen::MatrixXd>(grid.blocks.col(k).data(), b, b);
  }
  if (crop && (out.rows() != grid.height || out.cols() != grid.width))
    return out.topLeftCorner(grid.height, grid.width);
  return out;
}

std::int64_t BlockMeasurementSet::total_measurements() const {
  std::int64_t total = 0;
  for (const auto& b : blocks) total += b.count();
  return total;
}

MeasurementSizeMap BlockMeasurementSet::coverage() const {
  MeasurementSizeMap m;
  m.block_size = block_size;
  m.sizes.resize(grid_rows, grid_cols);
  for (int k = 0; k < static_cast<int>(blocks.size()); ++k)
    m.sizes(k / grid_cols, k % grid_cols) = blocks[static_cast<std::size_t>(k)].first_row +
                                            blocks[static_cast<std::size_t>(k)].count();
  m.bound_k = block_size * block_size;
  m.budget_q = blocks.empty() ? 0 : static_cast<int>(m.sizes.sum() / static_cast<std::int64_t>(blocks.size()));
  return m;
}

BlockMeasurementSet sample_blocks(const BlockGrid& grid, const GeneratingMatrix& a, const MeasurementSizeMap& qmap) {
  check_qmap(grid, a, qmap);
  auto s = empty_set_like(grid, a);
  parallel_for(static_cast<std::size_t>(grid.count()), [&](std::size_t k) {
    const auto q = qmap.at(static_cast<int>(k));
    if (q < 0 || q > a.n()) throw RangeError("sample_blocks: q_i=" + std::to_string(q) + " out of range");
    auto& out = s.blocks[k];
    out.first_row = 0;
    out.values = a.truncate(static_cast<int>(q)) * grid.blocks.col(static_cast<Eigen::Index>(k));
  });
  return s;
}

BlockMeasurementSet residual_sample_blocks(const BlockGrid& grid, const GeneratingMatrix& a, int q_basic,
                                           const MeasurementSizeMap& qmap) {
  check_qmap(grid, a, qmap);
  if (q_basic < 0 || q_basic > a.n()) throw RangeError("residual sampling: q_b out of range");
  auto s = empty_set_like(grid, a);
  parallel_for(static_cast<std::size_t>(grid.count()), [&](std::size_t k) {
    const auto q = qmap.at(static_cast<int>(k));
    if (q < q_basic)
      throw InvariantError("residual sampling: q_i=" + std::to_string(q) + " below q_b=" + std::to_string(q_basic));
    if (q > a.n()) throw RangeError("residual sampling: q_i=" + std::to_string(q) + " exceeds N");
    auto& out = s.blocks[k];
    out.first_row = q_basic;
    out.values = a.rows_range(q_basic, static_cast<int>(q) - q_basic) * grid.blocks.col(static_cast<Eigen::Index>(k));
  });
  return s;
}

BlockMeasurementSet sample_uniform(const BlockGrid& grid, const GeneratingMatrix& a, int q) {
  MeasurementSizeMap m{IntGrid::Constant(grid.grid_rows, grid.grid_cols, q), grid.block_size, q, a.n()};
  return sample_blocks(grid, a, m);
}

void check_compatible(const BlockMeasurementSet& meas, const GeneratingMatrix& a) {
  if (meas.block_size != a.block_size()) throw ShapeError("measurement block size does not match the matrix");
  if (meas.matrix_hash != a.hash()) throw FormatError("measurements were produced by a different generating matrix");
  if (static_cast<int>(meas.blocks.size()) != meas.grid_rows * meas.grid_cols)
    throw ShapeError("measurement set block count does not match its grid");
  for (const auto& b : meas.blocks)
    if (b.first_row < 0 || b.first_row + b.count() > a.n())
      throw RangeError("measurement row range [" + std::to_string(b.first_row) + ", " +
                       std::to_string(b.first_row + b.count()) + ") outside the matrix");
}

BlockGrid layout_of(const BlockMeasurementSet& meas) {
  BlockGrid g;
  g.height = meas.height;
  g.width = meas.width;
  g.block_size = meas.block_size;
  g.grid_rows = meas.grid_rows;
  g.grid_cols = meas.grid_cols;
  return g;
}

Eigen::MatrixXd initialize_blocks(const BlockMeasurementSet& meas, const GeneratingMatrix& a) {
  check_compatible(meas, a);
  Eigen::MatrixXd out(a.n(), static_cast<Eigen::Index>(meas.blocks.size()));
  parallel_for(meas.blocks.size(), [&](std::size_t k) {
    const auto& b = meas.blocks[k];
    if (b.count() == 0)
      out.col(static_cast<Eigen::Index>(k)).setZero();
    else
      out.col(static_cast<Eigen::Index>(k)) = a.rows_range(b.first_row, b.count()).transpose() * b.values;
  });
  return out;
}

Image initialize(const BlockMeasurementSet& meas, const GeneratingMatrix& a) {
  auto g = layout_of(meas);
  g.blocks = initialize_blocks(meas, a);
  return fold(g);
}

BlockMeasurementSet merge(const BlockMeasurementSet& basic, const BlockMeasurementSet& residual) {
  if (basic.grid_rows != residual.grid_rows || basic.grid_cols != residual.grid_cols ||
      basic.block_size != residual.block_size || basic.height != residual.height || basic.width != residual.width)
    throw ShapeError("merge: basic and residual sets have different layouts");
  if (basic.matrix_hash != residual.matrix_hash) throw FormatError("merge: sets come from different matrices");
  BlockMeasurementSet out = basic;
  for (std::size_t k = 0; k < basic.blocks.size(); ++k) {
    const auto& b = basic.blocks[k];
    const auto& r = residual.blocks[k];
    if (r.first_row != b.first_row + b.count())
      throw RangeError("merge: residual rows of block " + std::to_string(k) + " do not continue the basic rows");
    auto& m = out.blocks[k];
    m.values.resize(b.count() + r.count());
    m.values << b.values, r.values;
  }
  return out;
}

}  // namespace cascs
