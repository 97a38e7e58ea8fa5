#include "cascs/wire.hpp"

#include "cascs/bytes.hpp"

#include <json.hpp>

#include <limits>

namespace cascs {

std::vector<std::uint8_t> encode_measurements(const BlockMeasurementSet& meas) {
  const int first = meas.blocks.empty() ? 0 : meas.blocks.front().first_row;
  for (const auto& b : meas.blocks) {
    if (b.first_row != first) throw FormatError("measurement file: blocks with different first rows cannot be encoded");
    if (b.count() > std::numeric_limits<std::uint16_t>::max())
      throw FormatError("measurement file: q_i does not fit in u16");
  }
  if (static_cast<int>(meas.blocks.size()) != meas.grid_rows * meas.grid_cols)
    throw ShapeError("measurement file: block count does not match grid");
  ByteWriter w;
  w.magic("CASY");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(meas.height));
  w.u32(static_cast<std::uint32_t>(meas.width));
  w.u32(static_cast<std::uint32_t>(meas.block_size));
  w.u64(meas.matrix_hash);
  w.u32(static_cast<std::uint32_t>(first));
  for (const auto& b : meas.blocks) {
    w.u16(static_cast<std::uint16_t>(b.count()));
    for (Eigen::Index i = 0; i < b.values.size(); ++i) w.f32(static_cast<float>(b.values(i)));
  }
  return w.take();
}

BlockMeasurementSet decode_measurements(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "measurement file");
  r.expect_magic("CASY");
  const auto version = r.u32();
  if (version != 1) throw FormatError("measurement file: unsupported version " + std::to_string(version));
  BlockMeasurementSet s;
  s.height = static_cast<int>(r.u32());
  s.width = static_cast<int>(r.u32());
  s.block_size = static_cast<int>(r.u32());
  if (s.block_size <= 0 || s.height <= 0 || s.width <= 0) throw FormatError("measurement file: bad dimensions");
  s.matrix_hash = r.u64();
  const auto first = static_cast<int>(r.u32());
  s.grid_rows = (s.height + s.block_size - 1) / s.block_size;
  s.grid_cols = (s.width + s.block_size - 1) / s.block_size;
  const int n = s.block_size * s.block_size;
  s.blocks.resize(static_cast<std::size_t>(s.grid_rows) * static_cast<std::size_t>(s.grid_cols));
  for (auto& b : s.blocks) {
    const auto q = r.u16();
    if (first + q > n) throw FormatError("measurement file: q_i exceeds B^2");
    r.need(static_cast<std::size_t>(q) * 4);
    b.first_row = first;
    b.values.resize(q);
    for (int i = 0; i < q; ++i) b.values(i) = static_cast<double>(r.f32());
  }
  if (r.remaining() != 0) throw FormatError("measurement file: trailing bytes after last block");
  return s;
}

BlockMeasurementSet quantize_to_wire(const BlockMeasurementSet& meas) {
  BlockMeasurementSet out = meas;
  for (auto& b : out.blocks) b.values = b.values.cast<float>().cast<double>();
  return out;
}

void save_measurements(const BlockMeasurementSet& meas, const std::filesystem::path& path) {
  write_file_atomic(path, encode_measurements(meas));
}

BlockMeasurementSet load_measurements(const std::filesystem::path& path) {
  return decode_measurements(read_file(path));
}

std::string ratio_map_to_json(const RatioMap& r) {
  nlohmann::ordered_json j;
  j["block"] = r.block_size;
  auto grid = nlohmann::ordered_json::array();
  for (int i = 0; i < r.grid_rows(); ++i) {
    auto row = nlohmann::ordered_json::array();
    for (int c = 0; c < r.grid_cols(); ++c) row.push_back(r.ratios(i, c));
    grid.push_back(std::move(row));
  }
  j["grid"] = std::move(grid);
  j["budget_q"] = r.budget_q;
  j["bound_k"] = r.bound_k;
  return j.dump();
}

RatioMap ratio_map_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("ratio map: ") + e.what());
  }
  try {
    RatioMap r;
    r.block_size = j.at("block").get<int>();
    r.budget_q = j.at("budget_q").get<int>();
    r.bound_k = j.at("bound_k").get<int>();
    const auto& grid = j.at("grid");
    const auto rows = grid.size();
    const auto cols = rows ? grid.at(0).size() : 0;
    r.ratios.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows; ++i) {
      if (grid.at(i).size() != cols) throw FormatError("ratio map: ragged grid");
      for (std::size_t c = 0; c < cols; ++c)
        r.ratios(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = grid.at(i).at(c).get<double>();
    }
    if (r.block_size <= 0) throw FormatError("ratio map: block must be positive");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("ratio map: ") + e.what());
  }
}

void save_ratio_map(const RatioMap& r, const std::filesystem::path& path) {
  write_file_atomic(path, ratio_map_to_json(r));
}

RatioMap load_ratio_map(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return ratio_map_from_json(std::string(bytes.begin(), bytes.end()));
}

}  // namespace cascs
