#include "cascs/recovery.hpp"

#include "cascs/parallel.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace cascs {

namespace {

Image rotate_ccw(const Image& x) { return x.transpose().colwise().reverse(); }

Image rotate_ccw(Image x, int quarter_turns) {
  for (int k = 0; k < ((quarter_turns % 4) + 4) % 4; ++k) x = rotate_ccw(x);
  return x;
}

Image flip_lr(const Image& x) { return x.rowwise().reverse(); }

void check_canvas(const Image& x, const BlockMeasurementSet& meas, const char* what) {
  if (x.rows() != static_cast<Eigen::Index>(meas.grid_rows) * meas.block_size ||
      x.cols() != static_cast<Eigen::Index>(meas.grid_cols) * meas.block_size)
    throw ShapeError(std::string(what) + ": estimate does not match the padded measurement grid");
}

BlockGrid canvas_grid(const Image& x, const BlockMeasurementSet& meas) {
  auto g = unfold(x, meas.block_size);
  g.height = meas.height;
  g.width = meas.width;
  return g;
}

}  // namespace

Image ZeroResidualProx::residual(const Image& z, const Image&) const { return Image::Zero(z.rows(), z.cols()); }

Eigen::MatrixXd dct_matrix(int n) {
  Eigen::MatrixXd c(n, n);
  for (int k = 0; k < n; ++k) {
    const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / n);
    for (int i = 0; i < n; ++i) c(k, i) = scale * std::cos(std::numbers::pi * (2 * i + 1) * k / (2.0 * n));
  }
  return c;
}

double soft_threshold(double x, double lambda) {
  if (x > lambda) return x - lambda;
  if (x < -lambda) return x + lambda;
  return 0.0;
}

DctSoftThresholdProx::DctSoftThresholdProx(double base_threshold, int tile)
    : base_threshold_(base_threshold), tile_(tile) {
  if (!(base_threshold >= 0.0)) throw RangeError("dct prox: lambda must be >= 0");
  if (tile <= 0) throw RangeError("dct prox: tile must be positive");
}

std::string DctSoftThresholdProx::name() const {
  std::ostringstream os;
  os << "dct:lambda=" << base_threshold_ << ",tile=" << tile_;
  return os.str();
}

Eigen::MatrixXd DctSoftThresholdProx::thresholds(const Image& r) const {
  const auto tr = (r.rows() + tile_ - 1) / tile_;
  const auto tc = (r.cols() + tile_ - 1) / tile_;
  Eigen::MatrixXd out(tr, tc);
  for (Eigen::Index i = 0; i < tr; ++i)
    for (Eigen::Index j = 0; j < tc; ++j) {
      const auto h = std::min<Eigen::Index>(tile_, r.rows() - i * tile_);
      const auto w = std::min<Eigen::Index>(tile_, r.cols() - j * tile_);
      out(i, j) = base_threshold_ * (1.0 - r.block(i * tile_, j * tile_, h, w).array()).mean();
    }
  return out;
}

Image DctSoftThresholdProx::residual(const Image& z, const Image& r) const {
  if (r.rows() != z.rows() || r.cols() != z.cols()) throw ShapeError("dct prox: ratio map shape mismatch");
  Image out = Image::Zero(z.rows(), z.cols());
  if (base_threshold_ == 0.0) return out;
  const Eigen::MatrixXd lambda = thresholds(r);
  std::vector<Eigen::MatrixXd> bases(static_cast<std::size_t>(tile_) + 1);
  for (int n = 1; n <= tile_; ++n) bases[static_cast<std::size_t>(n)] = dct_matrix(n);
  const auto tr = lambda.rows();
  const auto tc = lambda.cols();
  parallel_for(static_cast<std::size_t>(tr * tc), [&](std::size_t t) {
    const auto i = static_cast<Eigen::Index>(t) / tc;
    const auto j = static_cast<Eigen::Index>(t) % tc;
    const auto h = std::min<Eigen::Index>(tile_, z.rows() - i * tile_);
    const auto w = std::min<Eigen::Index>(tile_, z.cols() - j * tile_);
    const auto& ch = bases[static_cast<std::size_t>(h)];
    const auto& cw = bases[static_cast<std::size_t>(w)];
    const Eigen::MatrixXd tile = z.block(i * tile_, j * tile_, h, w);
    Eigen::MatrixXd coef = ch * tile * cw.transpose();
    const double dc = coef(0, 0);
    const double lam = lambda(i, j);
    coef = coef.unaryExpr([lam](double c) { return soft_threshold(c, lam); });
    coef(0, 0) = dc;
    out.block(i * tile_, j * tile_, h, w) = ch.transpose() * coef * cw - tile;
  });
  return out;
}

std::shared_ptr<const ProximalOperator> make_prox(const std::string& spec) {
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  if (kind == "zero" || kind == "identity") return std::make_shared<ZeroResidualProx>();
  if (kind != "dct") throw RangeError("unknown proximal operator '" + kind + "'");
  double lambda = kDefaultDctThreshold;
  int tile = 8;
  if (colon != std::string::npos) {
    std::stringstream ss(spec.substr(colon + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw RangeError("bad prox parameter '" + item + "'");
      const auto key = item.substr(0, eq);
      const auto value = item.substr(eq + 1);
      try {
        if (key == "lambda")
          lambda = std::stod(value);
        else if (key == "tile")
          tile = std::stoi(value);
        else
          throw RangeError("unknown prox parameter '" + key + "'");
      } catch (const std::logic_error&) {
        throw RangeError("bad value for prox parameter '" + key + "'");
      }
    }
  }
  return std::make_shared<DctSoftThresholdProx>(lambda, tile);
}

std::array<DihedralTransform, 8> DihedralTransform::all() {
  std::array<DihedralTransform, 8> out;
  for (int i = 0; i < 8; ++i) out[static_cast<std::size_t>(i)] = from_index(i);
  return out;
}

DihedralTransform DihedralTransform::from_index(int index) {
  if (index < 0 || index > 7) throw RangeError("dihedral index must be in [0, 7]");
  return {index % 4, index >= 4};
}

Image DihedralTransform::apply(const Image& x) const {
  return rotate_ccw(flip ? flip_lr(x) : x, quarter_turns);
}

Image DihedralTransform::invert(const Image& x) const {
  Image y = rotate_ccw(x, 4 - quarter_turns);
  return flip ? flip_lr(y) : y;
}

std::string DihedralTransform::name() const {
  std::string s = flip ? "flip" : "";
  if (quarter_turns != 0) s += (flip ? "+rot" : "rot") + std::to_string(90 * quarter_turns);
  return s.empty() ? "identity" : s;
}

PhaseFn rte_wrap(PhaseFn phase, DihedralTransform transform) {
  return [phase = std::move(phase), transform](const Image& z, const Image& r) {
    if (!transform.preserves_shape() && z.rows() != z.cols())
      throw ShapeError("rte: rotation " + transform.name() + " needs a square image");
    return transform.invert(phase(transform.apply(z), transform.apply(r)));
  };
}

double RecoveryConfig::step(int phase) const {
  if (step_sizes.empty()) return 1.0;
  return step_sizes.at(static_cast<std::size_t>(phase - 1));
}

void RecoveryConfig::validate() const {
  if (phases < 0) throw RangeError("recovery: phase count must be non-negative");
  if (!step_sizes.empty() && static_cast<int>(step_sizes.size()) != phases)
    throw RangeError("recovery: need one step size per phase");
  for (double rho : step_sizes)
    if (!(rho > 0.0)) throw RangeError("recovery: step sizes must be positive");
}

Image block_gradient_step(const Image& xhat, const BlockMeasurementSet& meas, const GeneratingMatrix& a, double rho) {
  check_compatible(meas, a);
  check_canvas(xhat, meas, "block_gradient_step");
  auto g = canvas_grid(xhat, meas);
  parallel_for(meas.blocks.size(), [&](std::size_t k) {
    const auto& b = meas.blocks[k];
    if (b.count() == 0 || rho == 0.0) return;
    const auto rows = a.rows_range(b.first_row, b.count());
    auto x = g.blocks.col(static_cast<Eigen::Index>(k));
    const Vector residual = rows * x - b.values;
    x -= rho * (rows.transpose() * residual);
  });
  return fold(g, false);
}

Image proximal_step(const Image& z, const Image& r, const ProximalOperator& op) {
  if (r.rows() != z.rows() || r.cols() != z.cols()) throw ShapeError("proximal step: ratio map shape mismatch");
  const Image res = op.residual(z, r);
  if (res.rows() != z.rows() || res.cols() != z.cols())
    throw InvariantError("proximal operator '" + op.name() + "' changed the image shape");
  return z + res;
}

double data_fidelity(const Image& xhat, const BlockMeasurementSet& meas, const GeneratingMatrix& a) {
  check_compatible(meas, a);
  check_canvas(xhat, meas, "data_fidelity");
  const auto g = canvas_grid(xhat, meas);
  std::vector<double> per_block(meas.blocks.size(), 0.0);
  parallel_for(meas.blocks.size(), [&](std::size_t k) {
    const auto& b = meas.blocks[k];
    if (b.count() == 0) return;
    per_block[k] = (a.rows_range(b.first_row, b.count()) * g.blocks.col(static_cast<Eigen::Index>(k)) - b.values)
                       .squaredNorm();
  });
  double total = 0.0;
  for (double v : per_block) total += v;
  return total;
}

ReconstructionResult reconstruct_from(const Image& initial_canvas, const BlockMeasurementSet& meas,
                                      const GeneratingMatrix& a, const RatioMap& rmap, const RecoveryConfig& config) {
  config.validate();
  check_compatible(meas, a);
  check_canvas(initial_canvas, meas, "reconstruct");
  if (rmap.grid_rows() != meas.grid_rows || rmap.grid_cols() != meas.grid_cols || rmap.block_size != meas.block_size)
    throw ShapeError("reconstruct: ratio map grid does not match the measurements");
  const auto prox = config.prox ? config.prox : make_prox("dct");
  const Image expanded = expand_ratio_map(rmap);

  ReconstructionResult out;
  Image x = initial_canvas;
  if (config.log) out.phases.push_back({0, 0.0, -1, data_fidelity(x, meas, a)});

  Rng rng(config.rte_seed);
  const bool square = x.rows() == x.cols();
  // Non-square canvases only admit the shape-preserving half of the group.
  std::uniform_int_distribution<int> pick_square(0, 7);
  std::uniform_int_distribution<int> pick_rect(0, 3);
  constexpr std::array<int, 4> kShapePreserving{0, 2, 4, 6};

  const PhaseFn base = [&prox](const Image& z, const Image& r) { return proximal_step(z, r, *prox); };
  for (int k = 1; k <= config.phases; ++k) {
    const double rho = config.step(k);
    const Image z = block_gradient_step(x, meas, a, rho);
    int transform = -1;
    if (config.rte) {
      transform = square ? pick_square(rng) : kShapePreserving[static_cast<std::size_t>(pick_rect(rng))];
      x = rte_wrap(base, DihedralTransform::from_index(transform))(z, expanded);
    } else {
      x = base(z, expanded);
    }
    if (config.log) out.phases.push_back({k, rho, transform, data_fidelity(x, meas, a)});
  }
  out.canvas = x;
  out.image = x.topLeftCorner(meas.height, meas.width);
  return out;
}

ReconstructionResult reconstruct(const BlockMeasurementSet& meas, const GeneratingMatrix& a, const RatioMap& rmap,
                                 const RecoveryConfig& config) {
  auto g = layout_of(meas);
  g.blocks = initialize_blocks(meas, a);
  return reconstruct_from(fold(g, false), meas, a, rmap, config);
}

void write_phase_csv(const std::vector<PhaseDiagnostics>& phases, std::ostream& out) {
  out << "phase,step_size,transform,data_fidelity\n";
  out.precision(12);
  for (const auto& p : phases)
    out << p.phase << ',' << p.step_size << ',' << p.transform << ',' << p.data_fidelity << '\n';
}

}  // namespace cascs
