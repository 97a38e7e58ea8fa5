#pragma once

// Deterministic synthetic images for tests.

#include "cascs/matrix_bank.hpp"
#include "cascs/types.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace cascs::testing {

inline Image random_image(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image x(h, w);
  for (int c = 0; c < w; ++c)
    for (int r = 0; r < h; ++r) x(r, c) = u(rng);
  return x;
}

/// A few axis-aligned rectangles of constant grey on a constant background.
inline Image piecewise_constant(int h, int w, std::uint64_t seed, int pieces = 5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> level(0.1, 0.9);
  std::uniform_int_distribution<int> row(0, h - 1), col(0, w - 1);
  Image x = Image::Constant(h, w, level(rng));
  for (int p = 0; p < pieces; ++p) {
    int r0 = row(rng), r1 = row(rng), c0 = col(rng), c1 = col(rng);
    if (r0 > r1) std::swap(r0, r1);
    if (c0 > c1) std::swap(c0, c1);
    x.block(r0, c0, r1 - r0 + 1, c1 - c0 + 1).setConstant(level(rng));
  }
  return x;
}

/// Smooth background plus a strongly textured quadrant. `quadrant` 0..3 picks
/// top-left, top-right, bottom-left, bottom-right.
inline Image textured_quadrant(int size, std::uint64_t seed, int quadrant = 0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double a = u(rng), b = u(rng);
  Image x(size, size);
  for (int c = 0; c < size; ++c)
    for (int r = 0; r < size; ++r)
      x(r, c) = 0.35 + 0.15 * std::sin(2 * std::numbers::pi * (a * r + b * c) / size) + 0.1 * r / size;
  const int half = size / 2;
  const int r0 = (quadrant / 2) * half, c0 = (quadrant % 2) * half;
  const double fr = 0.18 + 0.1 * u(rng), fc = 0.22 + 0.1 * u(rng);
  std::normal_distribution<double> noise(0.0, 0.06);
  for (int c = 0; c < half; ++c)
    for (int r = 0; r < half; ++r) {
      const double t = std::sin(2 * std::numbers::pi * fr * r) * std::cos(2 * std::numbers::pi * fc * c);
      const double v = 0.5 + 0.35 * t + noise(rng);
      x(r0 + r, c0 + c) = std::clamp(v, 0.0, 1.0);
    }
  return x;
}

/// The textured-quadrant suite used by the content-aware checks.
inline std::vector<Image> textured_suite(int size, int count, std::uint64_t seed) {
  std::vector<Image> out;
  for (int i = 0; i < count; ++i) out.push_back(textured_quadrant(size, seed + 97 * i, i % 4));
  return out;
}

/// Mixed natural-ish training corpus: gradients, edges and textures.
inline std::vector<Image> training_corpus(int size, int count, std::uint64_t seed) {
  std::vector<Image> out;
  for (int i = 0; i < count; ++i) {
    switch (i % 3) {
      case 0:
        out.push_back(textured_quadrant(size, seed + i, i % 4));
        break;
      case 1:
        out.push_back(piecewise_constant(size, size, seed + i, 8));
        break;
      default: {
        Image x = piecewise_constant(size, size, seed + i, 4);
        x = 0.7 * x + 0.3 * textured_quadrant(size, seed + 1000 + i, (i + 1) % 4);
        out.push_back(x);
      }
    }
  }
  return out;
}

/// SVD-initialized generating matrix learned from the training corpus.
inline GeneratingMatrix trained_matrix(int block_size, std::uint64_t seed = 11) {
  const int size = std::max(64, 4 * block_size);
  const auto corpus = training_corpus(size, 24, seed);
  return svd_init(patches_from_images(corpus, block_size)).matrix;
}

/// Random orthogonal N x N matrix (QR of a Gaussian), for non-SVD tests.
inline GeneratingMatrix random_orthogonal(int block_size, std::uint64_t seed) {
  const int n = block_size * block_size;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::MatrixXd m(n, n);
  for (int c = 0; c < n; ++c)
    for (int r = 0; r < n; ++r) m(r, c) = g(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  RowMatrix q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  return GeneratingMatrix(q, block_size);
}

}  // namespace cascs::testing
