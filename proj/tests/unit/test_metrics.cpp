#include <doctest.h>

#include <algorithm>
#include <json.hpp>

#include "mesoforge/metrics.hpp"
#include "oracles.hpp"
#include "suites.hpp"

using namespace mesoforge;
namespace o = oracle;

TEST_CASE("ROC and AUC match brute-force counting on small score sets") {
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    INFO("seed " << seed);
    CHECK(suites::roc_oracle_mismatches(seed) == 0);
  }
}

TEST_CASE("AUC equals the Mann-Whitney statistic") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CHECK(suites::auc_mann_whitney_error(seed) < 1e-9);
  }
}

TEST_CASE("ROC curve runs from (0, 0) to (1, 1) with non-decreasing rates") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(30);
    std::vector<int> l(30);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = rng.uniform(-0.2, 1.2);  // past both ends of [0, 1]
      l[i] = static_cast<int>(rng.below(2));
    }
    l[0] = 0;
    l[1] = 1;
    const std::vector<RocPoint> roc = roc_curve(s, l);
    CHECK(roc.front().fpr == 0.0);
    CHECK(roc.front().tpr == 0.0);
    CHECK(roc.back().fpr == 1.0);
    CHECK(roc.back().tpr == 1.0);
    for (std::size_t k = 1; k < roc.size(); ++k) {
      CHECK(roc[k].threshold < roc[k - 1].threshold);
      CHECK(roc[k].fpr >= roc[k - 1].fpr);
      CHECK(roc[k].tpr >= roc[k - 1].tpr);
    }
  }
}

TEST_CASE("AUC of separable, reversed and tied scores") {
  const std::vector<int> l{0, 0, 1, 1};
  CHECK(roc_auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, l) == 1.0);
  CHECK(roc_auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, l) == 0.0);
  CHECK(roc_auc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, l) == 0.5);
}

TEST_CASE("a score equal to the threshold predicts real") {
  const std::vector<double> s{0.5, 0.5, 0.49999};
  const std::vector<int> l{1, 0, 1};
  const Confusion c = confusion_at(s, l, 0.5);
  CHECK(c == Confusion{1, 1, 0, 1});
}

TEST_CASE("evaluate fills the report") {
  const std::vector<double> s{0.9, 0.7, 0.4, 0.2, 0.6};
  const std::vector<int> l{1, 1, 0, 0, 0};
  const EvalReport r = evaluate(s, l);
  CHECK(r.count == 5);
  CHECK(r.real_count == 2);
  CHECK(r.forged_count == 3);
  CHECK(*r.accuracy_real == 1.0);
  CHECK(*r.accuracy_forged == doctest::Approx(2.0 / 3.0));
  CHECK(r.accuracy_total == doctest::Approx(0.8));
  double risk = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) risk += 0.5 * (s[i] - l[i]) * (s[i] - l[i]);
  CHECK(r.empirical_risk == doctest::Approx(risk / 5.0));
  CHECK(*r.auc == o::mann_whitney_auc(s, l));
}

TEST_CASE("a missing class leaves accuracy, ROC and AUC undefined") {
  const std::vector<double> s{0.9, 0.3};
  const std::vector<int> l{1, 1};
  const EvalReport r = evaluate(s, l);
  CHECK_FALSE(r.accuracy_forged.has_value());
  CHECK(r.accuracy_real.has_value());
  CHECK(r.roc.empty());
  CHECK_FALSE(r.auc.has_value());
  CHECK_THROWS_AS(roc_curve(s, l), MetricsError);
  CHECK(render_report(r, ReportFormat::Table).find("n/a") != std::string::npos);
}

TEST_CASE("bad metric inputs") {
  CHECK_THROWS_AS(evaluate({}, {}), MetricsError);
  CHECK_THROWS(evaluate(std::vector<double>{0.5}, std::vector<int>{2}));
  CHECK_THROWS(evaluate(std::vector<double>{0.5, 0.1}, std::vector<int>{1}));
  CHECK_THROWS(parse_report_format("xml"));
}

TEST_CASE("reports render deterministically in every format") {
  const std::vector<double> s{0.9, 0.7, 0.4, 0.2};
  const std::vector<int> l{1, 0, 0, 1};
  const EvalReport r = evaluate(s, l);
  for (ReportFormat f : {ReportFormat::Table, ReportFormat::Csv, ReportFormat::Json}) {
    CHECK(render_report(r, f) == render_report(evaluate(s, l), f));
    CHECK(parse_report_format(to_string(f)) == f);
  }
  const auto j = nlohmann::json::parse(render_report(r, ReportFormat::Json));
  CHECK(j.contains("auc"));
  CHECK(j["tp"] == r.confusion.tp);
  const std::string csv = render_roc_csv(r.roc);
  CHECK(csv.rfind("fpr,tpr,threshold\n", 0) == 0);
  CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == r.roc.size() + 1);
}
