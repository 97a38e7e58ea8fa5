#pragma once

#include "cascs/types.hpp"

#include <filesystem>
#include <limits>
#include <string>
#include <vector>

namespace cascs {

double mse(const Image& x, const Image& y);

/// 10 log10(1 / mse) on the [0, 1] range; +inf for identical images.
double psnr(const Image& x, const Image& y);

/// Mean SSIM with an 11 x 11 Gaussian window (sigma 1.5), C1 = 0.01^2,
/// C2 = 0.03^2, over the valid region. Images must be at least 11 x 11.
double ssim(const Image& x, const Image& y);

struct QualityRecord {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
  double mse = 0.0;
};

QualityRecord evaluate(const std::string& name, const Image& reference, const Image& estimate);

/// Arithmetic mean of each metric, named "mean".
QualityRecord aggregate(const std::vector<QualityRecord>& records);

enum class ReportFormat { json, csv };

inline constexpr const char* kQualitySchema = "cascs.quality/1";

/// JSON: {"schema", "tool_version", "config_hash", "records": [...], "aggregate": {...}}.
/// Non-finite PSNR is written as the string "inf".
std::string format_report(const std::vector<QualityRecord>& records, ReportFormat format,
                          const std::string& config_hash = "");
std::vector<QualityRecord> parse_json_report(const std::string& text);

void emit_report(const std::vector<QualityRecord>& records, ReportFormat format, const std::filesystem::path& path,
                 const std::string& config_hash = "");

}  // namespace cascs
