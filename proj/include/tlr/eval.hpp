#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "tlr/corpus.hpp"
#include "tlr/stats.hpp"

namespace tlr::eval {

struct EvalResult {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool precision_undefined = false;  // tp + fp == 0
  bool recall_undefined = false;     // tp + fn == 0
};

/// Precision, recall and F1 from raw counts; zero denominators give 0 and a flag.
EvalResult from_counts(std::size_t tp, std::size_t fp, std::size_t fn);

/// Harmonic mean, 0 when p + r == 0.
double f1_score(double precision, double recall);

EvalResult evaluate(const LinkSet& predicted, const LinkSet& truth);

struct Comparison {
  std::string method_a;
  std::string method_b;
  stats::WilcoxonResult test;  // one-sided, H1: method_a > method_b
  bool significant = false;
};

struct ComparisonReport {
  double alpha = 0.05;
  std::size_t n_projects = 0;
  std::vector<Comparison> comparisons;  // every ordered pair of distinct methods
};

/// Pairwise one-sided Wilcoxon signed-rank tests over per-project F1 values.
/// Throws ValidationError when the sequences differ in length.
ComparisonReport compare_methods(const std::map<std::string, std::vector<double>>& f1_by_project,
                                 double alpha = 0.05);

nlohmann::json to_json(const EvalResult& r);
nlohmann::json to_json(const ComparisonReport& r);

struct TableRow {
  std::string approach;
  std::string project;
  EvalResult result;
};

/// `| Approach | Project | Precision | Recall | F1-Score |` with four decimals.
std::string to_markdown(const std::vector<TableRow>& rows);
std::string to_markdown(const ComparisonReport& r);

}  // namespace tlr::eval
