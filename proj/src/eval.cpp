#include "tlr/eval.hpp"

#include <cstdio>
#include <sstream>

#include "tlr/error.hpp"

namespace tlr::eval {

namespace {

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

double f1_score(double precision, double recall) {
  const double denom = precision + recall;
  return denom == 0.0 ? 0.0 : 2.0 * precision * recall / denom;
}

EvalResult from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  EvalResult r;
  r.tp = tp;
  r.fp = fp;
  r.fn = fn;
  if (tp + fp == 0) {
    r.precision_undefined = true;
  } else {
    r.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  }
  if (tp + fn == 0) {
    r.recall_undefined = true;
  } else {
    r.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  }
  r.f1 = f1_score(r.precision, r.recall);
  return r;
}

EvalResult evaluate(const LinkSet& predicted, const LinkSet& truth) {
  std::size_t tp = 0;
  for (const auto& link : predicted) tp += truth.count(link);
  return from_counts(tp, predicted.size() - tp, truth.size() - tp);
}

ComparisonReport compare_methods(const std::map<std::string, std::vector<double>>& f1_by_project,
                                 double alpha) {
  ComparisonReport report;
  report.alpha = alpha;
  if (!f1_by_project.empty()) report.n_projects = f1_by_project.begin()->second.size();
  for (const auto& [name, values] : f1_by_project) {
    if (values.size() != report.n_projects) {
      throw ValidationError("compare_methods: method '" + name + "' has " + std::to_string(values.size()) +
                            " values, expected " + std::to_string(report.n_projects));
    }
  }
  for (const auto& [a, xa] : f1_by_project) {
    for (const auto& [b, xb] : f1_by_project) {
      if (a == b) continue;
      Comparison c;
      c.method_a = a;
      c.method_b = b;
      c.test = stats::wilcoxon_signed_rank(xa, xb);
      c.significant = c.test.p_value < alpha;
      report.comparisons.push_back(std::move(c));
    }
  }
  return report;
}

nlohmann::json to_json(const EvalResult& r) {
  return {{"tp", r.tp},
          {"fp", r.fp},
          {"fn", r.fn},
          {"precision", r.precision},
          {"recall", r.recall},
          {"f1", r.f1},
          {"precision_undefined", r.precision_undefined},
          {"recall_undefined", r.recall_undefined}};
}

nlohmann::json to_json(const ComparisonReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& c : r.comparisons) {
    rows.push_back({{"method_a", c.method_a},
                    {"method_b", c.method_b},
                    {"w_plus", c.test.w_plus},
                    {"w_minus", c.test.w_minus},
                    {"w", c.test.statistic},
                    {"n_nonzero", c.test.n_nonzero},
                    {"p_value", c.test.p_value},
                    {"exact", c.test.exact},
                    {"all_zero", c.test.all_zero},
                    {"significant", c.significant}});
  }
  return {{"alpha", r.alpha}, {"n_projects", r.n_projects}, {"comparisons", rows}};
}

std::string to_markdown(const std::vector<TableRow>& rows) {
  std::ostringstream out;
  out << "| Approach | Project | Precision | Recall | F1-Score |\n";
  out << "|---|---|---|---|---|\n";
  for (const auto& row : rows) {
    out << "| " << row.approach << " | " << row.project << " | " << fixed4(row.result.precision) << " | "
        << fixed4(row.result.recall) << " | " << fixed4(row.result.f1) << " |\n";
  }
  return out.str();
}

std::string to_markdown(const ComparisonReport& r) {
  std::ostringstream out;
  out << "| Method A | Method B | W+ | W- | W | p-value | Significant (alpha=" << r.alpha << ") |\n";
  out << "|---|---|---|---|---|---|---|\n";
  for (const auto& c : r.comparisons) {
    char p[32];
    std::snprintf(p, sizeof p, "%.6f", c.test.p_value);
    out << "| " << c.method_a << " | " << c.method_b << " | " << c.test.w_plus << " | " << c.test.w_minus
        << " | " << c.test.statistic << " | " << p << " | " << (c.significant ? "yes" : "no") << " |\n";
  }
  return out.str();
}

}  // namespace tlr::eval
