#include "mesoforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace mesoforge {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw MetricsError("metrics: " + std::to_string(scores.size()) + " scores for " +
                       std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) {
      throw MetricsError("metrics: score #" + std::to_string(i) + " is not finite");
    }
    if (labels[i] != 0 && labels[i] != 1) {
      throw MetricsError("metrics: label #" + std::to_string(i) + " is not 0 or 1");
    }
  }
}

struct CurveCounts {
  std::vector<std::int64_t> tp;
  std::vector<std::int64_t> fp;
  std::vector<double> thresholds;
  std::int64_t pos = 0;
  std::int64_t neg = 0;
};

CurveCounts curve_counts(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  CurveCounts c;
  for (int l : labels) (l == 1 ? c.pos : c.neg) += 1;
  if (c.pos == 0 || c.neg == 0) {
    throw MetricsError("ROC/AUC needs both classes (got " + std::to_string(c.pos) +
                       " real, " + std::to_string(c.neg) + " forged)");
  }
  std::vector<double> th(scores.begin(), scores.end());
  th.push_back(0.0);
  th.push_back(1.0);
  const auto [lo, hi] = std::ranges::minmax(scores);
  if (hi >= 1.0) th.push_back(std::numeric_limits<double>::infinity());
  if (lo < 0.0) th.push_back(-std::numeric_limits<double>::infinity());
  std::ranges::sort(th, std::greater<>());
  th.erase(std::unique(th.begin(), th.end()), th.end());

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::ranges::sort(order, [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t k = 0;
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  for (double t : th) {
    while (k < order.size() && scores[order[k]] >= t) {
      (labels[order[k]] == 1 ? tp : fp) += 1;
      ++k;
    }
    c.tp.push_back(tp);
    c.fp.push_back(fp);
    c.thresholds.push_back(t);
  }
  return c;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed4(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : "n/a"; }

}  // namespace

Confusion confusion_at(std::span<const double> scores, std::span<const int> labels,
                       double threshold) {
  check_inputs(scores, labels);
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted_real = scores[i] >= threshold;
    if (labels[i] == 1) {
      (predicted_real ? c.tp : c.fn) += 1;
    } else {
      (predicted_real ? c.fp : c.tn) += 1;
    }
  }
  return c;
}

std::vector<RocPoint> roc_curve(std::span<const double> scores,
                                std::span<const int> labels) {
  const CurveCounts c = curve_counts(scores, labels);
  std::vector<RocPoint> roc;
  roc.reserve(c.tp.size());
  for (std::size_t i = 0; i < c.tp.size(); ++i) {
    roc.push_back({static_cast<double>(c.fp[i]) / static_cast<double>(c.neg),
                   static_cast<double>(c.tp[i]) / static_cast<double>(c.pos),
                   c.thresholds[i]});
  }
  return roc;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  const CurveCounts c = curve_counts(scores, labels);
  // Twice the area in count units: sum of (dFP) * (TP_prev + TP_cur).
  std::int64_t area2 = 0;
  std::int64_t prev_tp = 0;
  std::int64_t prev_fp = 0;
  for (std::size_t i = 0; i < c.tp.size(); ++i) {
    area2 += (c.fp[i] - prev_fp) * (c.tp[i] + prev_tp);
    prev_tp = c.tp[i];
    prev_fp = c.fp[i];
  }
  return static_cast<double>(area2) /
         (2.0 * static_cast<double>(c.pos) * static_cast<double>(c.neg));
}

EvalReport evaluate(std::span<const double> scores, std::span<const int> labels,
                    double threshold) {
  if (scores.empty()) throw MetricsError("evaluate: no scores");
  check_inputs(scores, labels);
  EvalReport r;
  r.threshold = threshold;
  r.count = static_cast<std::int64_t>(scores.size());
  r.confusion = confusion_at(scores, labels, threshold);
  r.real_count = r.confusion.tp + r.confusion.fn;
  r.forged_count = r.confusion.tn + r.confusion.fp;
  r.accuracy_total = static_cast<double>(r.confusion.tp + r.confusion.tn) /
                     static_cast<double>(r.count);
  if (r.real_count > 0) {
    r.accuracy_real = static_cast<double>(r.confusion.tp) / static_cast<double>(r.real_count);
  }
  if (r.forged_count > 0) {
    r.accuracy_forged =
        static_cast<double>(r.confusion.tn) / static_cast<double>(r.forged_count);
  }
  double risk = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double d = scores[i] - labels[i];
    risk += 0.5 * d * d;
  }
  r.empirical_risk = risk / static_cast<double>(r.count);
  if (r.real_count > 0 && r.forged_count > 0) {
    r.roc = roc_curve(scores, labels);
    r.auc = roc_auc(scores, labels);
  }
  return r;
}

ReportFormat parse_report_format(std::string_view text) {
  if (text == "table") return ReportFormat::Table;
  if (text == "csv") return ReportFormat::Csv;
  if (text == "json") return ReportFormat::Json;
  throw std::invalid_argument("unknown report format '" + std::string(text) +
                              "' (expected table, csv or json)");
}

std::string to_string(ReportFormat format) {
  switch (format) {
    case ReportFormat::Table: return "table";
    case ReportFormat::Csv: return "csv";
    case ReportFormat::Json: return "json";
  }
  return "table";
}

std::string render_report(const EvalReport& r, ReportFormat format) {
  std::ostringstream out;
  const Confusion& c = r.confusion;
  switch (format) {
    case ReportFormat::Table: {
      char line[160];
      std::snprintf(line, sizeof line, "%-10s %10s %10s %10s\n", "", "forged", "real",
                    "total");
      out << line;
      std::snprintf(line, sizeof line, "%-10s %10s %10s %10s\n", "accuracy",
                    fixed4(r.accuracy_forged).c_str(), fixed4(r.accuracy_real).c_str(),
                    fixed4(r.accuracy_total).c_str());
      out << line;
      std::snprintf(line, sizeof line, "%-10s %10lld %10lld %10lld\n", "images",
                    static_cast<long long>(r.forged_count),
                    static_cast<long long>(r.real_count),
                    static_cast<long long>(r.count));
      out << line;
      out << "\nconfusion (real = positive, threshold " << fixed4(r.threshold) << ")\n";
      out << "  TP " << c.tp << "  FP " << c.fp << "  TN " << c.tn << "  FN " << c.fn
          << "\n";
      out << "empirical risk  " << fixed4(r.empirical_risk) << "\n";
      out << "AUC             " << fixed4(r.auc) << "\n";
      break;
    }
    case ReportFormat::Csv: {
      out << "metric,value\n";
      out << "count," << r.count << "\n";
      out << "forged_count," << r.forged_count << "\n";
      out << "real_count," << r.real_count << "\n";
      out << "threshold," << num(r.threshold) << "\n";
      out << "accuracy_forged," << opt_num(r.accuracy_forged) << "\n";
      out << "accuracy_real," << opt_num(r.accuracy_real) << "\n";
      out << "accuracy_total," << num(r.accuracy_total) << "\n";
      out << "tp," << c.tp << "\nfp," << c.fp << "\ntn," << c.tn << "\nfn," << c.fn
          << "\n";
      out << "empirical_risk," << num(r.empirical_risk) << "\n";
      out << "auc," << opt_num(r.auc) << "\n";
      break;
    }
    case ReportFormat::Json: {
      nlohmann::ordered_json j;
      auto opt = [](const std::optional<double>& v) {
        return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json("n/a");
      };
      j["count"] = r.count;
      j["forged_count"] = r.forged_count;
      j["real_count"] = r.real_count;
      j["threshold"] = r.threshold;
      j["accuracy_forged"] = opt(r.accuracy_forged);
      j["accuracy_real"] = opt(r.accuracy_real);
      j["accuracy_total"] = r.accuracy_total;
      j["tp"] = c.tp;
      j["fp"] = c.fp;
      j["tn"] = c.tn;
      j["fn"] = c.fn;
      j["empirical_risk"] = r.empirical_risk;
      j["auc"] = opt(r.auc);
      out << j.dump(2) << "\n";
      break;
    }
  }
  return out.str();
}

std::string render_roc_csv(const std::vector<RocPoint>& roc) {
  std::string out = "fpr,tpr,threshold\n";
  for (const RocPoint& p : roc) {
    out += num(p.fpr) + "," + num(p.tpr) + "," + num(p.threshold) + "\n";
  }
  return out;
}

}  // namespace mesoforge
