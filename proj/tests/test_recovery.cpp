#include "cascs/metrics.hpp"
#include "cascs/recovery.hpp"

#include "support/oracles.hpp"
#include "support/synthetic.hpp"

#include <doctest.h>

#include <random>
#include <sstream>

using namespace cascs;
using namespace cascs::testing;

namespace {

GeneratingMatrix toy_matrix() {
  RowMatrix a(4, 4);
  a << 1, 0, 2, -1,  //
      0, 1, 1, 1,    //
      3, -2, 0, 1,   //
      1, 1, 1, 1;
  return GeneratingMatrix(a, 2);
}

RatioMap uniform_map(const BlockMeasurementSet& m, int q) {
  return {Eigen::MatrixXd::Constant(m.grid_rows, m.grid_cols, static_cast<double>(q) / (m.block_size * m.block_size)),
          m.block_size, q, m.block_size * m.block_size};
}

class ShapeBreaker final : public ProximalOperator {
 public:
  Image residual(const Image& z, const Image&) const override { return Image::Zero(z.rows() + 1, z.cols()); }
  std::string name() const override { return "broken"; }
};

}  // namespace

TEST_SUITE("recovery") {
  TEST_CASE("gradient step on a data-consistent estimate is the identity") {
    const auto a = trained_matrix(8);
    const Image x = random_image(32, 32, 1);
    const auto meas = sample_uniform(unfold(x, 8), a, 20);
    CHECK(block_gradient_step(x, meas, a, 1.0) == x);
    const Image other = random_image(32, 32, 2);
    CHECK(block_gradient_step(other, meas, a, 0.0) == other);
  }

  TEST_CASE("hand computed toy gradient step") {
    const auto a = toy_matrix();
    Image xhat(2, 2);
    xhat << 1, 0, 0, 1;  // vectorized (1, 0, 0, 1)
    BlockMeasurementSet meas;
    meas.height = meas.width = meas.block_size = 2;
    meas.grid_rows = meas.grid_cols = 1;
    meas.matrix_hash = a.hash();
    meas.blocks = {{0, (Vector(2) << 1, 1).finished()}};
    // A_2 xhat = (0, 1); residual (-1, 0); A_2^T r = (-1, 0, -2, 1).
    const Image z = block_gradient_step(xhat, meas, a, 0.5);
    Image expected(2, 2);
    expected << 1.5, 1.0, 0.0, 0.5;
    CHECK(z == expected);
  }

  TEST_CASE("gradient step matches finite differences") {
    Rng rng(5);
    std::uniform_int_distribution<int> pick_q(1, 16);
    for (int t = 0; t < 25; ++t) {
      const auto a = random_orthogonal(4, 50 + t);
      const int q = pick_q(rng);
      const Image x = random_image(4, 4, 60 + t);
      const auto meas = sample_uniform(unfold(random_image(4, 4, 70 + t), 4), a, q);
      const Eigen::MatrixXd aq = a.truncate(q);
      const Vector y = meas.blocks[0].values;
      const Vector xv = unfold(x, 4).blocks.col(0);
      const Vector g = numeric_gradient([&](const Vector& v) { return 0.5 * (aq * v - y).squaredNorm(); }, xv);
      const Vector step = xv - unfold(block_gradient_step(x, meas, a, 0.7), 4).blocks.col(0);
      CHECK((step - 0.7 * g).norm() <= 1e-4 * (0.7 * g).norm() + 1e-14);
    }
  }

  TEST_CASE("gradient step contracts the per-block residual") {
    const auto a = trained_matrix(8);
    const auto meas = sample_blocks(unfold(random_image(32, 32, 3), 8), a,
                                    {(IntGrid(4, 4) << 0, 1, 5, 9, 13, 20, 32, 40, 48, 50, 55, 60, 61, 62, 63, 64)
                                         .finished(),
                                     8, 0, 64});
    const Image x = random_image(32, 32, 4);
    for (double rho : {0.25, 0.5, 1.0}) {
      const Image z = block_gradient_step(x, meas, a, rho);
      const auto gx = unfold(x, 8), gz = unfold(z, 8);
      for (int k = 0; k < 16; ++k) {
        const auto& b = meas.blocks[k];
        if (b.count() == 0) {
          CHECK(gz.blocks.col(k) == gx.blocks.col(k));
          continue;
        }
        const auto rows = a.rows_range(0, b.count());
        const double before = (rows * gx.blocks.col(k) - b.values).norm();
        const double after = (rows * gz.blocks.col(k) - b.values).norm();
        CHECK(after <= before + 1e-12);
        CHECK(std::abs(after - std::abs(1 - rho) * before) <= 1e-10 * (1 + before));
      }
    }
  }

  TEST_CASE("proximal step") {
    const Image z = random_image(16, 16, 7);
    const Image r = Image::Constant(16, 16, 0.3);
    CHECK(proximal_step(z, r, ZeroResidualProx{}) == z);
    CHECK_THROWS_AS(proximal_step(z, r, ShapeBreaker{}), InvariantError);
    CHECK_THROWS_AS(proximal_step(z, Image::Zero(8, 16), ZeroResidualProx{}), ShapeError);
  }

  TEST_CASE("dct matrix matches the cosine sums") {
    const auto c = dct_matrix(8);
    CHECK((c * c.transpose() - Eigen::MatrixXd::Identity(8, 8)).cwiseAbs().maxCoeff() < 1e-14);
    const Image tile = random_image(8, 8, 1);
    const Eigen::MatrixXd coef = c * tile * c.transpose();
    for (int u = 0; u < 8; ++u)
      for (int v = 0; v < 8; ++v) CHECK(coef(u, v) == doctest::Approx(dct_coefficient(tile, u, v)).epsilon(1e-12));
  }

  TEST_CASE("dct prox elementary cases") {
    const Image z = random_image(16, 24, 2);
    const Image r = Image::Constant(16, 24, 0.4);
    CHECK(DctSoftThresholdProx(0.0).residual(z, r) == Image::Zero(16, 24));

    const Image flat = Image::Constant(8, 8, 0.6);
    CHECK(DctSoftThresholdProx(0.5).residual(flat, Image::Zero(8, 8)).cwiseAbs().maxCoeff() < 1e-14);

    // One AC coefficient c above the threshold comes out as c - lambda.
    Eigen::MatrixXd coef = Eigen::MatrixXd::Zero(8, 8);
    coef(0, 0) = 2.0;
    coef(2, 5) = 0.3;
    const Image tile = inverse_dct(coef);
    const double lambda = 0.1;
    const Image out = tile + DctSoftThresholdProx(lambda).residual(tile, Image::Zero(8, 8));
    CHECK(dct_coefficient(out, 2, 5) == doctest::Approx(0.3 - lambda).epsilon(1e-12));
    CHECK(dct_coefficient(out, 0, 0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(std::abs(dct_coefficient(out, 1, 1)) < 1e-12);

    CHECK(soft_threshold(0.5, 0.2) == doctest::Approx(0.3));
    CHECK(soft_threshold(-0.5, 0.2) == doctest::Approx(-0.3));
    CHECK(soft_threshold(0.1, 0.2) == 0.0);
  }

  TEST_CASE("dct prox reduces noise error") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> noise(0.0, 0.05);
    for (int s = 0; s < 5; ++s) {
      const Image clean = piecewise_constant(64, 64, 10 + s);
      Image noisy = clean;
      for (Eigen::Index i = 0; i < noisy.size(); ++i) noisy.data()[i] += noise(rng);
      const Image r = Image::Constant(64, 64, 0.25);
      const Image out = proximal_step(noisy, r, DctSoftThresholdProx(0.05));
      CHECK(mse(clean, out) <= mse(clean, noisy));
    }
  }

  TEST_CASE("threshold is non-increasing in the local ratio") {
    Image r(16, 32);
    r.leftCols(16).setConstant(0.1);
    r.rightCols(16).setConstant(0.6);
    const auto t = DctSoftThresholdProx(0.04).thresholds(r);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 4);
    CHECK(t(0, 0) == doctest::Approx(0.04 * 0.9));
    CHECK(t(1, 3) == doctest::Approx(0.04 * 0.4));
    for (int i = 0; i < 2; ++i) CHECK(t(i, 0) >= t(i, 3));
    Image ramp(8, 64);
    for (int c = 0; c < 64; ++c) ramp.col(c).setConstant(c / 63.0);
    const auto tr = DctSoftThresholdProx(0.02).thresholds(ramp);
    for (int j = 1; j < 8; ++j) CHECK(tr(0, j) <= tr(0, j - 1));
  }

  TEST_CASE("make_prox parsing") {
    CHECK(make_prox("zero")->name() == "zero");
    const auto d = std::dynamic_pointer_cast<const DctSoftThresholdProx>(make_prox("dct"));
    REQUIRE(d);
    CHECK(d->base_threshold() == kDefaultDctThreshold);
    CHECK(d->tile() == 8);
    const auto e = std::dynamic_pointer_cast<const DctSoftThresholdProx>(make_prox("dct:lambda=0.05,tile=4"));
    REQUIRE(e);
    CHECK(e->base_threshold() == 0.05);
    CHECK(e->tile() == 4);
    CHECK_THROWS_AS(make_prox("unet"), RangeError);
    CHECK_THROWS_AS(make_prox("dct:sigma=2"), RangeError);
    CHECK_THROWS_AS(make_prox("dct:lambda=abc"), RangeError);
    CHECK_THROWS_AS(make_prox("dct:lambda=-1"), RangeError);
  }

  TEST_CASE("dihedral transforms") {
    const Image x = random_image(6, 9, 4);
    for (const auto& t : DihedralTransform::all()) {
      CHECK(t.invert(t.apply(x)) == x);
      CHECK(t.apply(x) == dihedral_by_index(x, t.quarter_turns, t.flip));
      CHECK(DihedralTransform::from_index(t.index()).index() == t.index());
    }
    CHECK(DihedralTransform::from_index(0).name() == "identity");
    CHECK(DihedralTransform::from_index(5).name() == "flip+rot90");
    CHECK_THROWS_AS(DihedralTransform::from_index(8), RangeError);
    Image sq(2, 2);
    sq << 1, 2, 3, 4;
    Image rot(2, 2);
    rot << 2, 4, 1, 3;
    CHECK(DihedralTransform::from_index(1).apply(sq) == rot);
  }

  TEST_CASE("rte wrapper") {
    const auto prox = make_prox("dct:lambda=0.08");
    const PhaseFn base = [&](const Image& z, const Image& r) { return proximal_step(z, r, *prox); };
    const Image r = Image::Constant(16, 16, 0.3);
    for (int s = 0; s < 5; ++s) {
      const Image z = random_image(16, 16, 40 + s);
      const Image plain = base(z, r);
      CHECK(rte_wrap(base, {}) (z, r) == plain);
      // The tile grid is symmetric, so the DCT prox commutes with every transform.
      for (const auto& t : DihedralTransform::all())
        CHECK((rte_wrap(base, t)(z, r) - plain).cwiseAbs().maxCoeff() < 1e-12);
    }
    const Image rect = random_image(16, 24, 1);
    CHECK_THROWS_AS(rte_wrap(base, DihedralTransform::from_index(1))(rect, Image::Constant(16, 24, 0.3)), ShapeError);
    CHECK_NOTHROW(rte_wrap(base, DihedralTransform::from_index(6))(rect, Image::Constant(16, 24, 0.3)));
  }

  TEST_CASE("full-rate recovery is exact") {
    const auto a = trained_matrix(8);
    const Image x = random_image(40, 24, 8);
    const auto meas = sample_uniform(unfold(x, 8), a, 64);
    RecoveryConfig cfg;
    cfg.prox = make_prox("zero");
    for (int np : {0, 1, 5, 13}) {
      cfg.phases = np;
      const auto r = reconstruct(meas, a, uniform_map(meas, 64), cfg);
      CHECK((r.image - x).cwiseAbs().maxCoeff() <= 1e-8);
      CHECK(static_cast<int>(r.phases.size()) == np + 1);
    }
  }

  TEST_CASE("zero phases returns the transpose initialization") {
    const auto a = trained_matrix(8);
    const Image x = random_image(33, 20, 1);
    const auto meas = sample_uniform(unfold(x, 8, Padding::reflect), a, 17);
    RecoveryConfig cfg;
    cfg.phases = 0;
    const auto r = reconstruct(meas, a, uniform_map(meas, 17), cfg);
    CHECK(r.image == initialize(meas, a));
    CHECK(r.image.rows() == 33);
    CHECK(r.canvas.rows() == 40);
  }

  TEST_CASE("phases improve a piecewise-constant image at r = 0.25") {
    const auto a = trained_matrix(8);
    for (std::uint64_t s = 0; s < 4; ++s) {
      const Image x = piecewise_constant(64, 64, 100 + s);
      const auto meas = sample_uniform(unfold(x, 8), a, 16);
      RecoveryConfig cfg;
      cfg.phases = 0;
      const double p0 = psnr(x, reconstruct(meas, a, uniform_map(meas, 16), cfg).image);
      cfg.phases = 13;
      const double p13 = psnr(x, reconstruct(meas, a, uniform_map(meas, 16), cfg).image);
      CHECK(p13 > p0);
    }
  }

  TEST_CASE("data-consistent input with zero prox is a fixed point") {
    const auto a = trained_matrix(8);
    const Image x = random_image(32, 32, 5);
    const auto meas = sample_uniform(unfold(x, 8), a, 30);
    RecoveryConfig cfg;
    cfg.prox = make_prox("zero");
    cfg.phases = 6;
    const auto r = reconstruct_from(x, meas, a, uniform_map(meas, 30), cfg);
    CHECK(r.image == x);
    for (const auto& p : r.phases) CHECK(p.data_fidelity == 0.0);
  }

  TEST_CASE("reconstruction is deterministic, with and without RTE") {
    const auto a = trained_matrix(8);
    const Image x = textured_quadrant(64, 2, 3);
    const auto meas = sample_uniform(unfold(x, 8), a, 12);
    const auto rmap = uniform_map(meas, 12);
    RecoveryConfig cfg;
    const auto p = reconstruct(meas, a, rmap, cfg);
    CHECK(reconstruct(meas, a, rmap, cfg).image == p.image);
    cfg.rte = true;
    cfg.rte_seed = 77;
    const auto r1 = reconstruct(meas, a, rmap, cfg);
    const auto r2 = reconstruct(meas, a, rmap, cfg);
    CHECK(r1.image == r2.image);
    bool any_transform = false;
    for (const auto& ph : r1.phases)
      if (ph.transform > 0) any_transform = true;
    CHECK(any_transform);
    // Uniform R' and an 8-aligned square canvas make the prox equivariant.
    CHECK((r1.image - p.image).cwiseAbs().maxCoeff() < 1e-10);
  }

  TEST_CASE("rte on a non-square canvas only draws shape-preserving transforms") {
    const auto a = trained_matrix(8);
    const Image x = random_image(32, 48, 2);
    const auto meas = sample_uniform(unfold(x, 8), a, 20);
    RecoveryConfig cfg;
    cfg.rte = true;
    cfg.rte_seed = 5;
    cfg.phases = 30;
    const auto r = reconstruct(meas, a, uniform_map(meas, 20), cfg);
    for (std::size_t i = 1; i < r.phases.size(); ++i) CHECK(DihedralTransform::from_index(r.phases[i].transform).preserves_shape());
  }

  TEST_CASE("step sizes and config validation") {
    RecoveryConfig cfg;
    cfg.phases = 3;
    cfg.step_sizes = {1.0, 0.5};
    CHECK_THROWS_AS(cfg.validate(), RangeError);
    cfg.step_sizes = {1.0, 0.0, 0.5};
    CHECK_THROWS_AS(cfg.validate(), RangeError);
    cfg.step_sizes = {1.0, 0.25, 0.5};
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.step(2) == 0.25);
    cfg.phases = -1;
    cfg.step_sizes.clear();
    CHECK_THROWS_AS(cfg.validate(), RangeError);
  }

  TEST_CASE("phase csv") {
    std::ostringstream os;
    write_phase_csv({{0, 0.0, -1, 2.5}, {1, 1.0, 3, 0.125}}, os);
    CHECK(os.str() == "phase,step_size,transform,data_fidelity\n0,0,-1,2.5\n1,1,3,0.125\n");
  }

  TEST_CASE("ratio map mismatch is rejected") {
    const auto a = trained_matrix(8);
    const auto meas = sample_uniform(unfold(random_image(16, 16, 1), 8), a, 4);
    RatioMap bad{Eigen::MatrixXd::Constant(1, 2, 0.1), 8, 4, 64};
    CHECK_THROWS_AS(reconstruct(meas, a, bad, RecoveryConfig{}), ShapeError);
  }
}
