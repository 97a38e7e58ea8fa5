#include "cascs/image_io.hpp"

#include "cascs/bytes.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <memory>
#include <string>

namespace cascs {

namespace {

constexpr double kLumaR = 0.299;
constexpr double kLumaG = 0.587;
constexpr double kLumaB = 0.114;

double luma(double r, double g, double b) { return kLumaR * r + kLumaG * g + kLumaB * b; }

class PnmHeader {
 public:
  explicit PnmHeader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  long next_int() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) throw FormatError("pnm: corrupt header");
    long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_++] - '0');
      if (v > (1L << 30)) throw FormatError("pnm: header value too large");
    }
    return v;
  }
  /// Exactly one whitespace byte separates the header from the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) throw FormatError("pnm: corrupt header");
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 2;
};

}  // namespace

std::uint8_t quantize8(double v) {
  const double scaled = std::clamp(v, 0.0, 1.0) * 255.0;
  return static_cast<std::uint8_t>(std::round(scaled));
}

Image decode_pgm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    throw FormatError("pnm: only binary P5/P6 files are supported");
  const bool rgb = bytes[1] == '6';
  PnmHeader hdr(bytes);
  const long w = hdr.next_int();
  const long h = hdr.next_int();
  const long maxval = hdr.next_int();
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) throw FormatError("pnm: corrupt header");
  const std::size_t start = hdr.raster_start();
  const std::size_t sample_bytes = maxval < 256 ? 1 : 2;
  const std::size_t channels = rgb ? 3 : 1;
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * channels * sample_bytes;
  if (bytes.size() - start < need) throw FormatError("pnm: truncated raster");
  auto sample = [&](std::size_t idx) -> double {
    const std::size_t at = start + idx * sample_bytes;
    const unsigned v = sample_bytes == 1 ? bytes[at] : (static_cast<unsigned>(bytes[at]) << 8) | bytes[at + 1];
    return static_cast<double>(v) / static_cast<double>(maxval);
  };
  Image out(h, w);
  for (long r = 0; r < h; ++r)
    for (long c = 0; c < w; ++c) {
      const std::size_t px = static_cast<std::size_t>(r * w + c) * channels;
      out(r, c) = rgb ? luma(sample(px), sample(px + 1), sample(px + 2)) : sample(px);
    }
  return out;
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
    throw FormatError(std::string("png: ") + img.message);
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const std::size_t channels = color ? 3 : 1;
  std::vector<std::uint8_t> raster(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, raster.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw FormatError("png: " + msg);
  }
  Image out(img.height, img.width);
  for (png_uint_32 r = 0; r < img.height; ++r)
    for (png_uint_32 c = 0; c < img.width; ++c) {
      const std::size_t px = (static_cast<std::size_t>(r) * img.width + c) * channels;
      out(r, c) = color ? luma(raster[px] / 255.0, raster[px + 1] / 255.0, raster[px + 2] / 255.0) : raster[px] / 255.0;
    }
  return out;
}

Image decode_image(std::span<const std::uint8_t> bytes) {
  static constexpr std::uint8_t kPngMagic[] = {0x89, 'P', 'N', 'G'};
  if (bytes.size() >= 4 && std::equal(std::begin(kPngMagic), std::end(kPngMagic), bytes.begin()))
    return decode_png(bytes);
  if (bytes.size() >= 2 && bytes[0] == 'P') return decode_pgm(bytes);
  throw FormatError("unsupported image format");
}

Image load_image(const std::filesystem::path& path) { return decode_image(read_file(path)); }

std::vector<std::uint8_t> encode_pgm(const Image& image) {
  const std::string header = "P5\n" + std::to_string(image.cols()) + " " + std::to_string(image.rows()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + static_cast<std::size_t>(image.size()));
  for (Eigen::Index r = 0; r < image.rows(); ++r)
    for (Eigen::Index c = 0; c < image.cols(); ++c) out.push_back(quantize8(image(r, c)));
  return out;
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  std::vector<std::uint8_t> raster;
  raster.reserve(static_cast<std::size_t>(image.size()));
  for (Eigen::Index r = 0; r < image.rows(); ++r)
    for (Eigen::Index c = 0; c < image.cols(); ++c) raster.push_back(quantize8(image(r, c)));
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.cols());
  img.height = static_cast<png_uint_32>(image.rows());
  img.format = PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, raster.data(), 0, nullptr))
    throw IoError(std::string("png encode: ") + img.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, raster.data(), 0, nullptr))
    throw IoError(std::string("png encode: ") + img.message);
  out.resize(size);
  return out;
}

void save_image(const Image& image, const std::filesystem::path& path) {
  if (image.size() == 0) throw ShapeError("save_image: empty image");
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  write_file_atomic(path, ext == ".png" ? encode_png(image) : encode_pgm(image));
}

}  // namespace cascs
