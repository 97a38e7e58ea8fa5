#include "cascs/image_io.hpp"
#include "cascs/metrics.hpp"
#include "cascs/recovery.hpp"

#include "support/synthetic.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

using namespace cascs;
using namespace cascs::testing;

namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

Image quantized(const Image& x) {
  Image q(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) q.data()[i] = quantize8(x.data()[i]) / 255.0;
  return q;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "cascs_unit";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_SUITE("metrics_io") {
  TEST_CASE("pgm round trip is bit exact at 8 bits") {
    const Image x = quantized(random_image(13, 21, 3));
    const Image y = decode_pgm(encode_pgm(x));
    CHECK(y == x);
    const auto path = scratch("rt.pgm");
    save_image(x, path);
    CHECK(load_image(path) == x);
  }

  TEST_CASE("png round trip is bit exact at 8 bits") {
    const Image x = quantized(random_image(17, 9, 4));
    CHECK(decode_png(encode_png(x)) == x);
    const auto path = scratch("rt.png");
    save_image(x, path);
    CHECK(load_image(path) == x);
  }

  TEST_CASE("quantization rounds half away and clamps") {
    CHECK(quantize8(-0.2) == 0);
    CHECK(quantize8(1.7) == 255);
    CHECK(quantize8(0.5 / 255.0) == 1);
    CHECK(quantize8(127.49 / 255.0) == 127);
  }

  TEST_CASE("rgb and 16-bit inputs") {
    std::string p6 = "P6\n2 1\n255\n";
    p6 += std::string("\xff\x00\x00", 3);
    p6 += std::string("\x00\x00\xff", 3);
    const Image rgb = decode_image(bytes_of(p6));
    REQUIRE(rgb.rows() == 1);
    REQUIRE(rgb.cols() == 2);
    CHECK(rgb(0, 0) == doctest::Approx(0.299).epsilon(1e-12));
    CHECK(rgb(0, 1) == doctest::Approx(0.114).epsilon(1e-12));

    std::string p5 = "P5\n# comment\n2 1\n65535\n";
    p5 += std::string("\xff\xff\x80\x00", 4);
    const Image wide = decode_image(bytes_of(p5));
    CHECK(wide(0, 0) == 1.0);
    CHECK(wide(0, 1) == doctest::Approx(32768.0 / 65535.0));
  }

  TEST_CASE("corrupt headers are rejected") {
    CHECK_THROWS_AS(decode_image(bytes_of("P5\n2 x\n255\n")), FormatError);
    CHECK_THROWS_AS(decode_image(bytes_of("P5\n2 2\n255\n\x01")), FormatError);
    CHECK_THROWS_AS(decode_image(bytes_of("P5\n2 2\n70000\n")), FormatError);
    CHECK_THROWS_AS(decode_image(bytes_of("P2\n2 2\n255\n1 2 3 4")), FormatError);
    CHECK_THROWS_AS(decode_image(bytes_of("GIF89a")), FormatError);
    CHECK_THROWS_AS(decode_png(bytes_of("\x89PNG\r\n\x1a\nbroken")), FormatError);
    CHECK_THROWS_AS(load_image(scratch("missing.pgm")), IoError);
  }

  TEST_CASE("psnr and mse elementary values") {
    const Image x = random_image(20, 20, 1);
    CHECK(std::isinf(psnr(x, x)));
    CHECK(psnr(x, x) > 0);
    CHECK(ssim(x, x) == doctest::Approx(1.0));
    const Image y = x.array() + 0.1;
    CHECK(mse(x, y) == doctest::Approx(0.01));
    CHECK(psnr(x, y) == doctest::Approx(20.0));
    const Image z = x.array() + 0.1 / std::sqrt(2.0);
    CHECK(psnr(x, z) - psnr(x, y) == doctest::Approx(10 * std::log10(2.0)).epsilon(1e-9));
    CHECK_THROWS_AS(mse(x, Image::Zero(20, 19)), ShapeError);
    CHECK_THROWS_AS(ssim(Image::Zero(10, 10), Image::Zero(10, 10)), ShapeError);
  }

  TEST_CASE("metric symmetry and dihedral invariance") {
    const Image x = random_image(32, 32, 5);
    const Image y = (x + 0.2 * random_image(32, 32, 6)).cwiseMin(1.0);
    CHECK(psnr(x, y) == doctest::Approx(psnr(y, x)).epsilon(1e-14));
    CHECK(ssim(x, y) == doctest::Approx(ssim(y, x)).epsilon(1e-12));
    for (const auto& t : DihedralTransform::all()) {
      CHECK(psnr(t.apply(x), t.apply(y)) == doctest::Approx(psnr(x, y)).epsilon(1e-12));
      CHECK(ssim(t.apply(x), t.apply(y)) == doctest::Approx(ssim(x, y)).epsilon(1e-10));
    }
  }

  TEST_CASE("psnr falls strictly as noise grows") {
    const Image x = random_image(24, 24, 7);
    const Image n = random_image(24, 24, 8).array() - 0.5;
    double last = psnr(x, x);
    for (double s : {0.01, 0.02, 0.05, 0.1, 0.3}) {
      const double p = psnr(x, x + s * n);
      CHECK(p < last);
      last = p;
    }
  }

  TEST_CASE("ssim of a degraded image is below one") {
    const Image x = piecewise_constant(48, 48, 2);
    const Image y = x + 0.1 * (random_image(48, 48, 3).array() - 0.5).matrix();
    const double s = ssim(x, y);
    CHECK(s < 1.0);
    CHECK(s > 0.0);
  }

  TEST_CASE("reports") {
    CHECK(format_report({}, ReportFormat::csv) == "name,psnr,ssim,mse\n");
    const Image x = random_image(16, 16, 1);
    std::vector<QualityRecord> recs{evaluate("same", x, x), evaluate("noisy", x, x.array() + 0.05),
                                    {"manual", 30.0, 0.9, 0.001}};
    CHECK(recs[1].psnr == doctest::Approx(10 * std::log10(1 / 0.0025)));
    const auto text = format_report(recs, ReportFormat::json, "abc123");
    CHECK(text.find("\"schema\": \"cascs.quality/1\"") != std::string::npos);
    CHECK(text.find("\"psnr\": \"inf\"") != std::string::npos);
    CHECK(text.find("\"config_hash\": \"abc123\"") != std::string::npos);
    const auto back = parse_json_report(text);
    REQUIRE(back.size() == 3);
    CHECK(back[0].name == "same");
    CHECK(std::isinf(back[0].psnr));
    CHECK(back[1].psnr == recs[1].psnr);
    CHECK(back[2].ssim == 0.9);
    const auto mean = aggregate({recs[1], recs[2]});
    CHECK(mean.name == "mean");
    CHECK(mean.psnr == doctest::Approx((recs[1].psnr + 30.0) / 2));
    CHECK(mean.mse == doctest::Approx((0.0025 + 0.001) / 2));
    CHECK_THROWS_AS(parse_json_report("{\"schema\":\"other\",\"records\":[]}"), FormatError);
    CHECK_THROWS_AS(parse_json_report("not json"), FormatError);

    const auto path = scratch("report.csv");
    emit_report(recs, ReportFormat::csv, path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "name,psnr,ssim,mse");
  }
}
