#include "cascs/metrics.hpp"

#include "cascs/bytes.hpp"

#include <json.hpp>

#include <cmath>
#include <sstream>

namespace cascs {

namespace {

void check_same_shape(const Image& x, const Image& y, const char* what) {
  if (x.rows() != y.rows() || x.cols() != y.cols())
    throw ShapeError(std::string(what) + ": image shapes differ");
  if (x.size() == 0) throw ShapeError(std::string(what) + ": empty image");
}

Vector gaussian_window(int size, double sigma) {
  Vector w(size);
  const double centre = (size - 1) / 2.0;
  for (int i = 0; i < size; ++i) w(i) = std::exp(-((i - centre) * (i - centre)) / (2 * sigma * sigma));
  return w / w.sum();
}

/// Separable 'valid' correlation.
Eigen::MatrixXd filter_valid(const Eigen::MatrixXd& x, const Vector& w) {
  const auto k = w.size();
  const auto h = x.rows() - k + 1;
  const auto cols = x.cols() - k + 1;
  Eigen::MatrixXd tmp(h, x.cols());
  for (Eigen::Index r = 0; r < h; ++r) tmp.row(r) = w.transpose() * x.middleRows(r, k);
  Eigen::MatrixXd out(h, cols);
  for (Eigen::Index c = 0; c < cols; ++c) out.col(c) = tmp.middleCols(c, k) * w;
  return out;
}

nlohmann::ordered_json psnr_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double psnr_from(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw FormatError("quality report: bad psnr value '" + s + "'");
  }
  return j.get<double>();
}

}  // namespace

double mse(const Image& x, const Image& y) {
  check_same_shape(x, y, "mse");
  return (x - y).squaredNorm() / static_cast<double>(x.size());
}

double psnr(const Image& x, const Image& y) {
  const double m = mse(x, y);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / m);
}

double ssim(const Image& x, const Image& y) {
  check_same_shape(x, y, "ssim");
  constexpr int kWindow = 11;
  if (x.rows() < kWindow || x.cols() < kWindow) throw ShapeError("ssim: images must be at least 11x11");
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const Vector w = gaussian_window(kWindow, 1.5);
  const Eigen::MatrixXd mx = filter_valid(x, w);
  const Eigen::MatrixXd my = filter_valid(y, w);
  const Eigen::MatrixXd sxx = filter_valid(x.cwiseProduct(x), w) - mx.cwiseProduct(mx);
  const Eigen::MatrixXd syy = filter_valid(y.cwiseProduct(y), w) - my.cwiseProduct(my);
  const Eigen::MatrixXd sxy = filter_valid(x.cwiseProduct(y), w) - mx.cwiseProduct(my);
  const auto num = (2.0 * mx.array() * my.array() + c1) * (2.0 * sxy.array() + c2);
  const auto den = (mx.array().square() + my.array().square() + c1) * (sxx.array() + syy.array() + c2);
  return (num / den).mean();
}

QualityRecord evaluate(const std::string& name, const Image& reference, const Image& estimate) {
  QualityRecord r;
  r.name = name;
  r.mse = mse(reference, estimate);
  r.psnr = r.mse == 0.0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(1.0 / r.mse);
  r.ssim = ssim(reference, estimate);
  return r;
}

QualityRecord aggregate(const std::vector<QualityRecord>& records) {
  QualityRecord a{"mean"};
  if (records.empty()) return a;
  for (const auto& r : records) {
    a.psnr += r.psnr;
    a.ssim += r.ssim;
    a.mse += r.mse;
  }
  const double n = static_cast<double>(records.size());
  a.psnr /= n;
  a.ssim /= n;
  a.mse /= n;
  return a;
}

std::string format_report(const std::vector<QualityRecord>& records, ReportFormat format,
                          const std::string& config_hash) {
  if (format == ReportFormat::csv) {
    std::ostringstream os;
    os.precision(17);
    os << "name,psnr,ssim,mse\n";
    for (const auto& r : records) os << r.name << ',' << r.psnr << ',' << r.ssim << ',' << r.mse << '\n';
    return os.str();
  }
  nlohmann::ordered_json j;
  j["schema"] = kQualitySchema;
  j["tool_version"] = kVersion;
  j["config_hash"] = config_hash;
  auto arr = nlohmann::ordered_json::array();
  auto to_json = [](const QualityRecord& r) {
    nlohmann::ordered_json o;
    o["name"] = r.name;
    o["psnr"] = psnr_json(r.psnr);
    o["ssim"] = r.ssim;
    o["mse"] = r.mse;
    return o;
  };
  for (const auto& r : records) arr.push_back(to_json(r));
  j["records"] = std::move(arr);
  if (!records.empty()) j["aggregate"] = to_json(aggregate(records));
  return j.dump(2);
}

std::vector<QualityRecord> parse_json_report(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("schema").get<std::string>() != kQualitySchema) throw FormatError("quality report: unknown schema");
    std::vector<QualityRecord> out;
    for (const auto& o : j.at("records"))
      out.push_back({o.at("name").get<std::string>(), psnr_from(o.at("psnr")), o.at("ssim").get<double>(),
                     o.at("mse").get<double>()});
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("quality report: ") + e.what());
  }
}

void emit_report(const std::vector<QualityRecord>& records, ReportFormat format, const std::filesystem::path& path,
                 const std::string& config_hash) {
  write_file_atomic(path, format_report(records, format, config_hash));
}

}  // namespace cascs
