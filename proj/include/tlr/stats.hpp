#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tlr/corpus.hpp"

namespace tlr::stats {

/// |a ∩ b| / |a ∪ b|; 0 when both are empty.
double co_occurrence_ratio(const std::set<std::string>& a, const std::set<std::string>& b);

/// Average ranks (1-based); tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

/// Standard normal survival function P(Z > z).
double normal_sf(double z);

/// Survival function of chi-squared with an even number of degrees of
/// freedom `2 * half_df`, evaluated in closed form.
double chi2_sf_even(double x, std::size_t half_df);

enum class Alternative {
  /// H1: the second sample tends to exceed the first, i.e. U (counted from
  /// the first sample's rank sum) is larger than its null expectation.
  Greater,
  TwoSided,
};

struct RankTestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
  bool exact = false;
};

struct MannWhitneyResult : RankTestResult {
  double u = 0.0;        // N_A N_B + N_A(N_A+1)/2 - R_1, R_1 the rank sum of `a`
  double u_prime = 0.0;  // N_A N_B - U
  double rank_sum_a = 0.0;
  bool ties = false;
};

/// Mann-Whitney U with average ranks. p is exact (enumerated U distribution)
/// when max(|a|,|b|) <= 8 and there are no ties, otherwise the normal
/// approximation with tie-corrected variance and continuity correction.
/// Throws ValidationError on empty input.
MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b,
                                 Alternative alternative);

/// Number of arrangements of n_a first-sample and n_b second-sample ranks
/// giving each U value 0..n_a*n_b (no ties).
std::vector<double> mann_whitney_u_counts(std::size_t n_a, std::size_t n_b);

struct FisherResult {
  double p_value = 1.0;
  double statistic = 0.0;  // -2 Σ ln p_i
  std::size_t degrees_of_freedom = 0;
  bool clamped = false;  // some p_i was 0 and was raised to 1e-300
};

/// Fisher's method. Throws ValidationError on an empty sequence or p outside [0,1].
FisherResult fisher_combine(std::span<const double> p_values);

struct PermutationPlan {
  enum class Mode { Exhaustive, MonteCarlo };
  Mode mode = Mode::Exhaustive;
  std::size_t n_perms = 100000;

  static PermutationPlan exhaustive() { return {Mode::Exhaustive, 0}; }
  static PermutationPlan monte_carlo(std::size_t n) { return {Mode::MonteCarlo, n}; }
};

/// Largest n for which all n! permutations are enumerated.
inline constexpr std::size_t kMaxExhaustiveN = 8;

struct SpearmanResult : RankTestResult {
  double rho = 0.0;
  std::size_t permutations = 0;  // denominator of the p-value
  bool undefined = false;        // a constant sequence; rho reported as 0, p as 1
  bool ties = false;
};

/// Spearman's rho for rank vectors: the closed form 1 - 6Σd²/(n(n²-1)) without
/// ties, Pearson correlation of the ranks otherwise.
double spearman_rho(std::span<const double> x, std::span<const double> y);

/// Two-tailed permutation test on rho. Exhaustive when n <= 8 (requested or
/// not), Monte-Carlo with the observed statistic counted otherwise. Throws on
/// length mismatch or n < 3.
SpearmanResult spearman_permutation(std::span<const double> x, std::span<const double> y,
                                    PermutationPlan plan = PermutationPlan::exhaustive(),
                                    std::uint64_t seed = 0);

struct WilcoxonResult : RankTestResult {
  double w_plus = 0.0;
  double w_minus = 0.0;
  std::size_t n_nonzero = 0;
  bool all_zero = false;
};

/// Largest nonzero-difference count for which the exact null distribution is used.
inline constexpr std::size_t kMaxExactWilcoxonN = 15;

/// Wilcoxon signed-rank test of "x > y". Zero differences are dropped, |d| is
/// ranked with average ties and W = min(W+, W-). The one-sided p is
/// P(W+ >= observed) under random signs: exact for up to 15 nonzero
/// differences (ties included), normal approximation with continuity and tie
/// correction beyond that.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y);

struct DiffRatioOptions {
  std::size_t n_resamples = 100;
  std::uint64_t seed = 0;
};

struct DiffRatioReport {
  double p_true = 0.0;
  double p_false = 0.0;
  std::optional<double> difference_ratio;  // nullopt when p_false == 0
  bool difference_ratio_undefined = false;
  double combined_p = 1.0;
  double fisher_statistic = 0.0;
  std::size_t fisher_df = 0;
  bool fisher_clamped = false;
  std::size_t n_resamples = 0;
  std::uint64_t seed = 0;
  std::size_t n_true = 0;
  std::size_t n_false_pool = 0;
  bool sampled_with_replacement = false;
  std::vector<double> resample_means;
  std::vector<double> resample_p_values;
  std::vector<std::uint64_t> resample_seeds;
};

/// Mean co-occurrence ratio of the true links against `n_resamples` balanced
/// samples of false pairs. Resample i draws |true| false pairs without
/// replacement using derive_seed(seed, i). Each resample is tested with a
/// one-sided Mann-Whitney (false ratios first, true ratios second) and the p
/// values are combined with Fisher's method.
DiffRatioReport difference_ratio(const Project& project, const DiffRatioOptions& options = {});

nlohmann::json to_json(const DiffRatioReport& report);
std::string to_markdown(const DiffRatioReport& report, const std::string& project_name);

}  // namespace tlr::stats
