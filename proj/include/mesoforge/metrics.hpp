#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mesoforge {

/// Real (label 1) is the positive class. A score at or above the threshold
/// predicts real.
struct Confusion {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;
  std::int64_t fn = 0;
  bool operator==(const Confusion&) const = default;
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
  bool operator==(const RocPoint&) const = default;
};

struct EvalReport {
  std::int64_t count = 0;
  std::int64_t forged_count = 0;
  std::int64_t real_count = 0;
  double threshold = 0.5;
  std::optional<double> accuracy_forged;  // undefined without forged samples
  std::optional<double> accuracy_real;
  double accuracy_total = 0.0;
  Confusion confusion;
  /// Mean of 0.5 * (score - label)^2.
  double empirical_risk = 0.0;
  std::vector<RocPoint> roc;  // empty when a class is missing
  std::optional<double> auc;
};

class MetricsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

Confusion confusion_at(std::span<const double> scores, std::span<const int> labels,
                       double threshold);

/// Thresholds are the distinct scores together with 0 and 1, visited from
/// high to low, so both rates are non-decreasing along the list. Extra
/// endpoints at +-infinity are added when scores reach past [0, 1).
/// Requires both classes.
std::vector<RocPoint> roc_curve(std::span<const double> scores,
                                std::span<const int> labels);

/// Trapezoid area under the ROC curve, computed on integer counts so that it
/// equals the Mann-Whitney statistic U / (n_pos * n_neg).
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Non-empty input with labels in {0, 1}. A missing class leaves its
/// accuracy, the ROC list and the AUC undefined.
EvalReport evaluate(std::span<const double> scores, std::span<const int> labels,
                    double threshold = 0.5);

enum class ReportFormat { Table, Csv, Json };

ReportFormat parse_report_format(std::string_view text);
std::string to_string(ReportFormat format);

/// Deterministic text. Undefined values render as "n/a".
std::string render_report(const EvalReport& report, ReportFormat format);

/// "fpr,tpr,threshold" rows in curve order.
std::string render_roc_csv(const std::vector<RocPoint>& roc);

}  // namespace mesoforge
