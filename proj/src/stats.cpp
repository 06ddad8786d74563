#include "tlr/stats.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include "tlr/error.hpp"
#include "tlr/rng.hpp"

namespace tlr::stats {

namespace {

constexpr double kRhoEps = 1e-12;

double tie_term(std::span<const double> sorted_values) {
  double total = 0.0;
  std::size_t i = 0;
  while (i < sorted_values.size()) {
    std::size_t j = i;
    while (j < sorted_values.size() && sorted_values[j] == sorted_values[i]) ++j;
    const double t = static_cast<double>(j - i);
    total += t * t * t - t;
    i = j;
  }
  return total;
}

bool has_ties(std::span<const double> values) {
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  return std::adjacent_find(v.begin(), v.end()) != v.end();
}

double binomial(std::size_t n, std::size_t k) {
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return std::round(r);
}

}  // namespace

double co_occurrence_ratio(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::size_t common = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++common;
      ++ia;
      ++ib;
    }
  }
  const std::size_t total = a.size() + b.size() - common;
  return total == 0 ? 0.0 : static_cast<double>(common) / static_cast<double>(total);
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
    i = j;
  }
  return ranks;
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

double chi2_sf_even(double x, std::size_t half_df) {
  if (half_df == 0) throw ValidationError("chi2_sf_even: degrees of freedom must be positive");
  if (x <= 0.0) return 1.0;
  // Q = exp(-x/2) Σ_{i<k} (x/2)^i / i!, summed in log space.
  const double h = x / 2.0;
  const double log_h = std::log(h);
  std::vector<double> logs(half_df);
  for (std::size_t i = 0; i < half_df; ++i) {
    logs[i] = static_cast<double>(i) * log_h - std::lgamma(static_cast<double>(i) + 1.0);
  }
  const double m = *std::max_element(logs.begin(), logs.end());
  double sum = 0.0;
  for (double l : logs) sum += std::exp(l - m);
  return std::clamp(std::exp(m + std::log(sum) - h), 0.0, 1.0);
}

std::vector<double> mann_whitney_u_counts(std::size_t n_a, std::size_t n_b) {
  // table[i][j] = counts of U for i first-sample and j second-sample values.
  // The largest value either belongs to the second sample (adding i to U) or
  // to the first (adding nothing).
  std::vector<std::vector<std::vector<double>>> table(
      n_a + 1, std::vector<std::vector<double>>(n_b + 1));
  for (std::size_t i = 0; i <= n_a; ++i) {
    for (std::size_t j = 0; j <= n_b; ++j) {
      auto& cell = table[i][j];
      cell.assign(i * j + 1, 0.0);
      if (i == 0 || j == 0) {
        cell[0] = 1.0;
        continue;
      }
      const auto& from_b = table[i][j - 1];
      for (std::size_t u = 0; u < from_b.size(); ++u) cell[u + i] += from_b[u];
      const auto& from_a = table[i - 1][j];
      for (std::size_t u = 0; u < from_a.size(); ++u) cell[u] += from_a[u];
    }
  }
  return table[n_a][n_b];
}

MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b,
                                 Alternative alternative) {
  if (a.empty() || b.empty()) throw ValidationError("mann_whitney_u: empty sample");
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto ranks = average_ranks(pooled);

  MannWhitneyResult r;
  r.n_a = a.size();
  r.n_b = b.size();
  const double na = static_cast<double>(r.n_a);
  const double nb = static_cast<double>(r.n_b);
  r.rank_sum_a = std::accumulate(ranks.begin(), ranks.begin() + static_cast<std::ptrdiff_t>(a.size()), 0.0);
  r.u = na * nb + na * (na + 1.0) / 2.0 - r.rank_sum_a;
  r.u_prime = na * nb - r.u;
  r.statistic = r.u;
  r.ties = has_ties(pooled);

  if (std::max(r.n_a, r.n_b) <= 8 && !r.ties) {
    r.exact = true;
    const auto counts = mann_whitney_u_counts(r.n_a, r.n_b);
    const double total = binomial(r.n_a + r.n_b, r.n_a);
    const auto u_obs = static_cast<std::size_t>(std::llround(r.u));
    double upper = 0.0;
    double lower = 0.0;
    for (std::size_t u = 0; u < counts.size(); ++u) {
      if (u >= u_obs) upper += counts[u];
      if (u <= u_obs) lower += counts[u];
    }
    if (alternative == Alternative::Greater) {
      r.p_value = upper / total;
    } else {
      r.p_value = std::min(1.0, 2.0 * std::min(upper, lower) / total);
    }
    return r;
  }

  std::sort(pooled.begin(), pooled.end());
  const double n = na + nb;
  const double variance = na * nb / 12.0 * ((n + 1.0) - tie_term(pooled) / (n * (n - 1.0)));
  if (variance <= 0.0) {
    r.p_value = 1.0;
    return r;
  }
  const double sd = std::sqrt(variance);
  const double mean = na * nb / 2.0;
  if (alternative == Alternative::Greater) {
    r.p_value = normal_sf((r.u - mean - 0.5) / sd);
  } else {
    r.p_value = std::min(1.0, 2.0 * normal_sf((std::abs(r.u - mean) - 0.5) / sd));
  }
  r.p_value = std::clamp(r.p_value, 0.0, 1.0);
  return r;
}

FisherResult fisher_combine(std::span<const double> p_values) {
  if (p_values.empty()) throw ValidationError("fisher_combine: empty p-value sequence");
  FisherResult r;
  for (double p : p_values) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("fisher_combine: p-value outside [0,1]");
    if (p == 0.0) {
      p = 1e-300;
      r.clamped = true;
    }
    r.statistic += -2.0 * std::log(p);
  }
  r.degrees_of_freedom = 2 * p_values.size();
  r.p_value = chi2_sf_even(r.statistic, p_values.size());
  return r;
}

double spearman_rho(std::span<const double> rx, std::span<const double> ry) {
  const std::size_t n = rx.size();
  if (!has_ties(rx) && !has_ties(ry)) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) d2 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
    const double nn = static_cast<double>(n);
    return 1.0 - 6.0 * d2 / (nn * (nn * nn - 1.0));
  }
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

SpearmanResult spearman_permutation(std::span<const double> x, std::span<const double> y,
                                    PermutationPlan plan, std::uint64_t seed) {
  if (x.size() != y.size()) throw ValidationError("spearman_permutation: length mismatch");
  if (x.size() < 3) throw ValidationError("spearman_permutation: need at least 3 observations");
  SpearmanResult r;
  r.n_a = x.size();
  r.n_b = y.size();
  const auto rx = average_ranks(x);
  auto ry = average_ranks(y);
  r.ties = has_ties(x) || has_ties(y);
  const bool constant_x = std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; });
  const bool constant_y = std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
  if (constant_x || constant_y) {
    r.undefined = true;
    r.p_value = 1.0;
    return r;
  }
  r.rho = spearman_rho(rx, ry);
  r.statistic = r.rho;
  const double threshold = std::abs(r.rho) - kRhoEps;

  const std::size_t n = x.size();
  if (n <= kMaxExhaustiveN) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<double> permuted(n);
    std::size_t hits = 0;
    std::size_t total = 0;
    do {
      for (std::size_t i = 0; i < n; ++i) permuted[i] = ry[perm[i]];
      if (std::abs(spearman_rho(rx, permuted)) >= threshold) ++hits;
      ++total;
    } while (std::next_permutation(perm.begin(), perm.end()));
    r.exact = true;
    r.permutations = total;
    r.p_value = static_cast<double>(hits) / static_cast<double>(total);
    return r;
  }

  const std::size_t n_perms = plan.mode == PermutationPlan::Mode::MonteCarlo && plan.n_perms > 0
                                  ? plan.n_perms
                                  : std::size_t{100000};
  Rng rng(seed);
  std::vector<double> permuted = ry;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < n_perms; ++k) {
    rng.shuffle(permuted);
    if (std::abs(spearman_rho(rx, permuted)) >= threshold) ++hits;
  }
  r.permutations = n_perms + 1;
  r.p_value = static_cast<double>(hits + 1) / static_cast<double>(n_perms + 1);
  return r;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("wilcoxon_signed_rank: length mismatch");
  if (x.empty()) throw ValidationError("wilcoxon_signed_rank: empty input");
  WilcoxonResult r;
  r.n_a = x.size();
  r.n_b = y.size();
  std::vector<double> diffs;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    if (d != 0.0) diffs.push_back(d);
  }
  r.n_nonzero = diffs.size();
  if (diffs.empty()) {
    r.all_zero = true;
    r.p_value = 1.0;
    return r;
  }
  std::vector<double> magnitudes(diffs.size());
  std::transform(diffs.begin(), diffs.end(), magnitudes.begin(), [](double d) { return std::abs(d); });
  const auto ranks = average_ranks(magnitudes);
  for (std::size_t i = 0; i < diffs.size(); ++i) (diffs[i] > 0 ? r.w_plus : r.w_minus) += ranks[i];
  r.statistic = std::min(r.w_plus, r.w_minus);

  const std::size_t n = diffs.size();
  if (n <= kMaxExactWilcoxonN) {
    // Average ranks are multiples of 1/2, so doubled ranks index an integer table.
    std::vector<std::size_t> doubled(n);
    std::size_t max_sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      doubled[i] = static_cast<std::size_t>(std::llround(2.0 * ranks[i]));
      max_sum += doubled[i];
    }
    std::vector<double> dist(max_sum + 1, 0.0);
    dist[0] = 1.0;
    std::size_t reach = 0;
    for (std::size_t v : doubled) {
      for (std::size_t s = reach + 1; s-- > 0;) {
        if (dist[s] != 0.0) dist[s + v] += dist[s];
      }
      reach += v;
    }
    const auto observed = static_cast<std::size_t>(std::llround(2.0 * r.w_plus));
    double tail = 0.0;
    for (std::size_t s = observed; s <= max_sum; ++s) tail += dist[s];
    r.p_value = tail / std::ldexp(1.0, static_cast<int>(n));
    r.exact = true;
    return r;
  }

  std::sort(magnitudes.begin(), magnitudes.end());
  const double nn = static_cast<double>(n);
  const double mean = nn * (nn + 1.0) / 4.0;
  const double variance = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term(magnitudes) / 48.0;
  r.p_value = variance > 0.0 ? std::clamp(normal_sf((r.w_plus - mean - 0.5) / std::sqrt(variance)), 0.0, 1.0)
                             : 1.0;
  return r;
}

DiffRatioReport difference_ratio(const Project& project, const DiffRatioOptions& options) {
  if (options.n_resamples == 0) throw ValidationError("difference_ratio: n_resamples must be >= 1");
  const auto req_ids = project.requirement_ids();
  const auto code_ids = project.code_ids();
  const auto& truth = project.ground_truth();
  if (truth.empty()) throw ValidationError("difference_ratio: project has no true links");

  std::map<std::string, std::set<std::string>> token_sets;
  for (const auto& a : project.artifacts()) token_sets[a.id] = {a.tokens.begin(), a.tokens.end()};

  const std::uint64_t n_codes = code_ids.size();
  const std::uint64_t n_pairs = static_cast<std::uint64_t>(req_ids.size()) * n_codes;
  std::map<std::string, std::uint64_t> req_index, code_index;
  for (std::size_t i = 0; i < req_ids.size(); ++i) req_index[req_ids[i]] = i;
  for (std::size_t j = 0; j < code_ids.size(); ++j) code_index[code_ids[j]] = j;

  std::vector<std::uint64_t> true_linear;
  std::vector<double> true_ratios;
  for (const auto& link : truth) {
    true_linear.push_back(req_index.at(link.req_id) * n_codes + code_index.at(link.code_id));
    true_ratios.push_back(co_occurrence_ratio(token_sets[link.req_id], token_sets[link.code_id]));
  }
  std::sort(true_linear.begin(), true_linear.end());

  DiffRatioReport report;
  report.n_resamples = options.n_resamples;
  report.seed = options.seed;
  report.n_true = truth.size();
  report.n_false_pool = n_pairs - true_linear.size();
  if (report.n_false_pool == 0) throw ValidationError("difference_ratio: project has no false pairs");
  report.sampled_with_replacement = report.n_false_pool < report.n_true;
  report.p_true = std::accumulate(true_ratios.begin(), true_ratios.end(), 0.0) /
                  static_cast<double>(true_ratios.size());

  // The f-th false pair is the f-th linear index not occupied by a true link.
  auto false_pair_ratio = [&](std::uint64_t f) {
    std::uint64_t x = f;
    for (std::uint64_t t : true_linear) {
      if (t <= x) {
        ++x;
      } else {
        break;
      }
    }
    const auto& req = req_ids[x / n_codes];
    const auto& code = code_ids[x % n_codes];
    return co_occurrence_ratio(token_sets[req], token_sets[code]);
  };

  report.resample_seeds = derive_seeds(options.seed, options.n_resamples);
  double sum_means = 0.0;
  for (std::size_t i = 0; i < options.n_resamples; ++i) {
    Rng rng(report.resample_seeds[i]);
    std::vector<std::uint64_t> picks;
    if (report.sampled_with_replacement) {
      for (std::size_t k = 0; k < report.n_true; ++k) picks.push_back(rng.uniform_below(report.n_false_pool));
    } else {
      picks = rng.sample_distinct(report.n_false_pool, report.n_true);
    }
    std::vector<double> ratios;
    ratios.reserve(picks.size());
    for (auto f : picks) ratios.push_back(false_pair_ratio(f));
    const double mean = std::accumulate(ratios.begin(), ratios.end(), 0.0) / static_cast<double>(ratios.size());
    sum_means += mean;
    report.resample_means.push_back(mean);
    report.resample_p_values.push_back(mann_whitney_u(ratios, true_ratios, Alternative::Greater).p_value);
  }
  report.p_false = sum_means / static_cast<double>(options.n_resamples);
  if (report.p_false > 0.0) {
    report.difference_ratio = (report.p_true - report.p_false) / report.p_false;
  } else {
    report.difference_ratio_undefined = true;
  }
  const auto fisher = fisher_combine(report.resample_p_values);
  report.combined_p = fisher.p_value;
  report.fisher_statistic = fisher.statistic;
  report.fisher_df = fisher.degrees_of_freedom;
  report.fisher_clamped = fisher.clamped;
  return report;
}

nlohmann::json to_json(const DiffRatioReport& r) {
  nlohmann::json j = {
      {"p_true", r.p_true},
      {"p_false", r.p_false},
      {"difference_ratio", r.difference_ratio ? nlohmann::json(*r.difference_ratio) : nlohmann::json(nullptr)},
      {"difference_ratio_undefined", r.difference_ratio_undefined},
      {"combined_p", r.combined_p},
      {"fisher_statistic", r.fisher_statistic},
      {"fisher_df", r.fisher_df},
      {"fisher_clamped", r.fisher_clamped},
      {"n_resamples", r.n_resamples},
      {"seed", r.seed},
      {"n_true", r.n_true},
      {"n_false_pool", r.n_false_pool},
      {"sampled_with_replacement", r.sampled_with_replacement},
      {"resample_means", r.resample_means},
      {"resample_p_values", r.resample_p_values},
      {"resample_seeds", r.resample_seeds},
      {"note",
       "The resampled Mann-Whitney tests share one true-link sample, so they are not independent; "
       "the Fisher combination treats them as independent."},
  };
  return j;
}

std::string to_markdown(const DiffRatioReport& r, const std::string& project_name) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << "| Project | TSWCR | NTSWCR | Difference ratio | p-value |\n";
  out << "|---|---|---|---|---|\n";
  out << "| " << project_name << " | " << r.p_true * 100.0 << "% | " << r.p_false * 100.0 << "% | ";
  if (r.difference_ratio) {
    out << (*r.difference_ratio >= 0 ? "+" : "") << *r.difference_ratio * 100.0 << "%";
  } else {
    out << "undefined";
  }
  out << " | ";
  if (r.combined_p < 0.01) {
    out << "<0.01";
  } else {
    out << std::setprecision(4) << r.combined_p;
  }
  out << " |\n";
  return out.str();
}

}  // namespace tlr::stats
