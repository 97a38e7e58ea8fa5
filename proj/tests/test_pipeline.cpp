#include "cascs/pipeline.hpp"
#include "cascs/wire.hpp"

#include "support/synthetic.hpp"

#include <doctest.h>

#include <filesystem>
#include <sstream>

using namespace cascs;
using namespace cascs::testing;

namespace {

const GeneratingMatrix& matrix8() {
  static const GeneratingMatrix a = trained_matrix(8);
  return a;
}

PipelineConfig config(double r, double gamma, PipelineMode mode, int phases = 3) {
  PipelineConfig c;
  c.ratio = r;
  c.gamma = gamma;
  c.mode = mode;
  c.seed = 9;
  c.recovery.phases = phases;
  return c;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("budget arithmetic") {
    const auto b = budget_for(0.25, kDefaultGamma, 256);
    CHECK(b.q == 64);
    CHECK(b.q_basic == 18);  // round(0.2822 * 64) = round(18.06)
    CHECK(b.residual_target() == 46);
    CHECK(b.residual_bound() == 238);
    CHECK(budget_for(0.1, 1.0, 64).q_basic == budget_for(0.1, 1.0, 64).q);
    CHECK(budget_for(0.5, 0.0, 64).q_basic == 0);
    CHECK_THROWS_AS(budget_for(1.5, 0.3, 64), RangeError);
    CHECK_THROWS_AS(budget_for(0.5, -0.1, 64), RangeError);
  }

  TEST_CASE("gamma endpoints reproduce uniform sampling") {
    const Image x = textured_quadrant(40, 5, 2);
    for (double r : {0.1, 0.3}) {
      const auto uni = run_uniform(x, matrix8(), config(r, 0, PipelineMode::uniform));
      for (double g : {0.0, 1.0}) {
        const auto dep = run_deployed(x, matrix8(), config(r, g, PipelineMode::deployed));
        CHECK(dep.reconstruction == uni.reconstruction);
        CHECK(dep.ratios.ratios == uni.ratios.ratios);
      }
    }
  }

  TEST_CASE("full and empty budgets") {
    const Image x = random_image(24, 24, 3);
    PipelineConfig c = config(1.0, 0.4, PipelineMode::deployed);
    c.recovery.prox = make_prox("zero");
    for (auto mode : {PipelineMode::deployed, PipelineMode::ideal, PipelineMode::uniform}) {
      c.mode = mode;
      c.ratio = 1.0;
      const auto full = run_pipeline(x, matrix8(), c);
      // Measurements cross the f32 wire.
      CHECK((full.reconstruction - x).cwiseAbs().maxCoeff() < 1e-5);
      c.ratio = 0.0;
      const auto none = run_pipeline(x, matrix8(), c);
      CHECK(none.reconstruction.cwiseAbs().maxCoeff() == 0.0);
      CHECK(none.measurements.total_measurements() == 0);
    }
  }

  TEST_CASE("deployed budget conservation") {
    for (std::uint64_t s = 0; s < 6; ++s) {
      const Image x = textured_quadrant(48, 20 + s, s % 4);
      const double r = 0.05 + 0.1 * s;
      const auto res = run_deployed(x, matrix8(), config(r, 0.3, PipelineMode::deployed, 1));
      const auto& b = res.budget;
      const auto sizes = to_size_map(res.ratios);
      CHECK(sizes.total() == static_cast<std::int64_t>(b.q) * sizes.blocks());
      CHECK(res.measurements.total_measurements() == sizes.total());
      CHECK(sizes.sizes.minCoeff() >= b.q_basic);
      CHECK(sizes.sizes.maxCoeff() <= 64);
      const auto cov = res.measurements.coverage();
      CHECK(cov.sizes == sizes.sizes);
    }
  }

  TEST_CASE("exchange log order, sizes and determinism") {
    const Image x = textured_quadrant(40, 8, 1);
    const auto c = config(0.3, 0.25, PipelineMode::deployed);
    const auto a1 = run_deployed(x, matrix8(), c);
    const auto a2 = run_deployed(x, matrix8(), c);
    REQUIRE(a1.log.messages.size() == 3);
    CHECK(a1.log.messages[0].name == "basic_measurements");
    CHECK(a1.log.messages[1].name == "residual_request");
    CHECK(a1.log.messages[2].name == "residual_measurements");
    for (std::size_t i = 0; i < 3; ++i) CHECK(a1.log.messages[i].payload == a2.log.messages[i].payload);
    CHECK(a1.reconstruction == a2.reconstruction);

    const auto basic = decode_measurements(a1.log.find("basic_measurements").payload);
    const auto residual = decode_measurements(a1.log.find("residual_measurements").payload);
    const std::size_t header = 4 + 4 * 4 + 8 + 4;
    const std::size_t l = basic.blocks.size();
    CHECK(a1.log.messages[0].payload.size() == header + 2 * l + 4 * basic.total_measurements());
    CHECK(a1.log.messages[2].payload.size() == header + 2 * l + 4 * residual.total_measurements());
    CHECK(basic.total_measurements() + residual.total_measurements() ==
          static_cast<std::int64_t>(a1.budget.q) * static_cast<std::int64_t>(l));
    CHECK(a1.log.total_bytes() == a1.log.messages[0].payload.size() + a1.log.messages[1].payload.size() +
                                      a1.log.messages[2].payload.size());
    CHECK_THROWS_AS(a1.log.find("nope"), RangeError);
  }

  TEST_CASE("ideal mode on a flat image equals uniform") {
    const Image x = Image::Constant(32, 32, 0.4);
    const auto ideal = run_ideal(x, matrix8(), config(0.25, 0, PipelineMode::ideal));
    const auto uni = run_uniform(x, matrix8(), config(0.25, 0, PipelineMode::uniform));
    CHECK(ideal.ratios.ratios == uni.ratios.ratios);
    CHECK(ideal.reconstruction == uni.reconstruction);
  }

  TEST_CASE("deployed and ideal ratio maps broadly agree") {
    const Image x = textured_quadrant(64, 3, 0);
    const auto dep = run_deployed(x, matrix8(), config(0.3, 0.3, PipelineMode::deployed, 1));
    const auto ideal = run_ideal(x, matrix8(), config(0.3, 0, PipelineMode::ideal, 1));
    const Eigen::MatrixXd d = dep.ratios.ratios, i = ideal.ratios.ratios;
    const double md = d.mean(), mi = i.mean();
    int agree = 0;
    for (Eigen::Index k = 0; k < d.size(); ++k)
      if ((d.data()[k] > md) == (i.data()[k] > mi)) ++agree;
    MESSAGE("above-mean agreement " << agree << "/" << d.size());
    CHECK(agree >= 0.75 * static_cast<double>(d.size()));
  }

  TEST_CASE("uniform quality grows with the ratio") {
    const Image x = piecewise_constant(48, 48, 4);
    double last = 0.0;
    for (double r : {0.1, 0.25, 0.5}) {
      const auto res = run_uniform(x, matrix8(), config(r, 0, PipelineMode::uniform));
      const double p = psnr(x, res.reconstruction);
      CHECK(p >= last);
      last = p;
    }
  }

  TEST_CASE("non-divisible images are padded and cropped") {
    const Image x = random_image(37, 29, 6);
    const auto res = run_deployed(x, matrix8(), config(0.3, 0.3, PipelineMode::deployed));
    CHECK(res.reconstruction.rows() == 37);
    CHECK(res.reconstruction.cols() == 29);
    CHECK(res.initial.rows() == 37);
    CHECK(res.ratios.grid_rows() == 5);
    CHECK(res.ratios.grid_cols() == 4);
  }

  TEST_CASE("configuration validation and modes") {
    CHECK(parse_mode("deployed") == PipelineMode::deployed);
    CHECK(to_string(PipelineMode::ideal) == "ideal");
    CHECK_THROWS_AS(parse_mode("oracle"), RangeError);
    auto c = config(0.5, 0.5, PipelineMode::deployed);
    c.gamma = 2.0;
    CHECK_THROWS_AS(c.validate(), RangeError);
    c.gamma = 0.5;
    c.ratio = -0.1;
    CHECK_THROWS_AS(run_pipeline(random_image(16, 16, 1), matrix8(), c), RangeError);
  }

  TEST_CASE("sampling end checks the request") {
    const Image x = random_image(16, 16, 1);
    SamplingEnd device(x, matrix8());
    const RatioMap r{Eigen::MatrixXd::Constant(2, 2, 0.25), 8, 16, 64};
    CHECK_THROWS_AS(device.residual_measurements(ratio_map_to_json(r)), InvariantError);
    device.basic_measurements(4);
    const RatioMap wrong{Eigen::MatrixXd::Constant(3, 2, 0.25), 8, 16, 64};
    CHECK_THROWS_AS(device.residual_measurements(ratio_map_to_json(wrong)), ShapeError);
    CHECK_NOTHROW(device.residual_measurements(ratio_map_to_json(r)));
  }

  TEST_CASE("gamma sweep") {
    std::vector<NamedImage> images{{"a", textured_quadrant(32, 1, 0)}, {"b", piecewise_constant(32, 32, 2)}};
    const auto rows = gamma_sweep(images, {0.2, 0.4}, 3, matrix8(), config(0, 0, PipelineMode::deployed, 1));
    CHECK(rows.size() == (2 + 1) * 3 * 3);
    auto find = [&](const std::string& r, double g, PipelineMode m) {
      for (const auto& row : rows)
        if (row.ratio == r && row.gamma == g && row.mode == m) return row;
      FAIL("row missing");
      return SweepRow{};
    };
    for (const auto& r : {std::string("0.2"), std::string("0.4"), std::string("mean")}) {
      CHECK(find(r, 0.0, PipelineMode::deployed).mean_psnr == find(r, 0.0, PipelineMode::uniform).mean_psnr);
      CHECK(find(r, 1.0, PipelineMode::deployed).mean_psnr == find(r, 1.0, PipelineMode::uniform).mean_psnr);
    }
    for (const auto& row : rows) {
      CHECK(std::isfinite(row.mean_psnr));
      CHECK(std::isfinite(row.mean_ssim));
    }
    std::ostringstream os;
    write_sweep_csv(rows, os);
    CHECK(os.str().rfind("ratio,gamma,mode,mean_psnr,mean_ssim\n", 0) == 0);
    CHECK_THROWS_AS(gamma_sweep(images, {0.2}, 1, matrix8(), PipelineConfig{}), RangeError);
    CHECK_THROWS_AS(gamma_sweep({}, {0.2}, 3, matrix8(), PipelineConfig{}), RangeError);
  }

  TEST_CASE("handoff files") {
    const auto dir = std::filesystem::temp_directory_path() / "cascs_unit" / "handoff";
    std::filesystem::remove_all(dir);
    const Image x = random_image(24, 24, 2);
    const auto dep = run_deployed(x, matrix8(), config(0.3, 0.3, PipelineMode::deployed));
    write_handoff(dep, dir);
    for (const char* f : {"basic.casy", "residual_request.json", "residual.casy", "ratios.json"})
      CHECK(std::filesystem::exists(dir / f));
    const auto merged = merge(load_measurements(dir / "basic.casy"), load_measurements(dir / "residual.casy"));
    CHECK(merged.coverage().sizes == to_size_map(load_ratio_map(dir / "ratios.json")).sizes);
    const auto rec = reconstruct(merged, matrix8(), load_ratio_map(dir / "ratios.json"), config(0, 0, {}).recovery);
    // Same measurements; only the initialization differs in summation order.
    CHECK((rec.image - dep.reconstruction).cwiseAbs().maxCoeff() < 1e-9);

    const auto udir = dir / "uniform";
    write_handoff(run_uniform(x, matrix8(), config(0.3, 0, PipelineMode::uniform)), udir);
    CHECK(std::filesystem::exists(udir / "measurements.casy"));
    CHECK(std::filesystem::exists(udir / "ratios.json"));
  }
}
