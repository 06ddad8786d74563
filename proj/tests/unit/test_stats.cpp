#include <doctest.h>

#include <cmath>
#include <numeric>

#include "common/oracles.hpp"
#include "common/planted.hpp"
#include "tlr/corpus.hpp"
#include "tlr/error.hpp"
#include "tlr/rng.hpp"
#include "tlr/stats.hpp"

using namespace tlr;
using namespace tlr::stats;

TEST_CASE("co-occurrence ratio") {
  CHECK(co_occurrence_ratio({"a", "b", "c"}, {"b", "c", "d"}) == doctest::Approx(0.5));
  CHECK(co_occurrence_ratio({}, {}) == 0.0);
  CHECK(co_occurrence_ratio({"a"}, {}) == 0.0);
  CHECK(co_occurrence_ratio({"a"}, {"a"}) == 1.0);
}

TEST_CASE("average ranks") {
  const std::vector<double> v{10, 20, 20, 5, 20};
  CHECK(average_ranks(v) == std::vector<double>{2, 4, 4, 1, 4});
  CHECK(average_ranks(std::vector<double>{}).empty());
}

TEST_CASE("normal and chi-squared survival functions") {
  CHECK(normal_sf(0.0) == doctest::Approx(0.5));
  CHECK(normal_sf(1.959963984540054) == doctest::Approx(0.025).epsilon(1e-9));
  CHECK(normal_sf(-1.0) == doctest::Approx(0.8413447460685429));
  CHECK(chi2_sf_even(3.0, 1) == doctest::Approx(std::exp(-1.5)));
  // df = 4: e^{-x/2} (1 + x/2)
  CHECK(chi2_sf_even(5.0, 2) == doctest::Approx(std::exp(-2.5) * 3.5));
  CHECK(chi2_sf_even(0.0, 3) == 1.0);
}

TEST_CASE("Mann-Whitney exact p equals enumeration for n_a, n_b <= 6") {
  for (std::size_t na = 1; na <= 6; ++na) {
    for (std::size_t nb = 1; nb <= 6; ++nb) {
      const std::size_t n = na + nb;
      for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        if (static_cast<std::size_t>(__builtin_popcount(mask)) != na) continue;
        std::vector<double> a, b;
        std::vector<int> ranks;
        for (std::size_t i = 0; i < n; ++i) {
          // values spaced unevenly to make sure only ranks matter
          const double value = static_cast<double>(i * i) + 0.5;
          if (mask & (1u << i)) {
            a.push_back(value);
            ranks.push_back(static_cast<int>(i) + 1);
          } else {
            b.push_back(value);
          }
        }
        const auto [greater, two] = tlr::testing::brute_mann_whitney(na, nb, ranks);
        const auto rg = mann_whitney_u(a, b, Alternative::Greater);
        const auto rt = mann_whitney_u(a, b, Alternative::TwoSided);
        REQUIRE(rg.exact);
        REQUIRE(rg.p_value == greater);
        REQUIRE(rt.p_value == two);
        REQUIRE(rg.u + rg.u_prime == doctest::Approx(static_cast<double>(na * nb)));
      }
    }
  }
}

TEST_CASE("Mann-Whitney orientation and approximation") {
  // second sample clearly larger: Greater should be significant
  const std::vector<double> lo{1, 2, 3, 4, 5}, hi{6, 7, 8, 9, 10};
  const auto r = mann_whitney_u(lo, hi, Alternative::Greater);
  CHECK(r.u == 25.0);
  CHECK(r.p_value == doctest::Approx(1.0 / 252.0));
  CHECK(mann_whitney_u(hi, lo, Alternative::Greater).p_value == doctest::Approx(1.0));

  // ties force the normal approximation
  const std::vector<double> a{1, 1, 2, 3, 3, 4, 5, 6, 7}, b{3, 4, 4, 5, 8, 9, 9, 10, 11};
  const auto t = mann_whitney_u(a, b, Alternative::Greater);
  CHECK_FALSE(t.exact);
  CHECK(t.ties);
  CHECK(t.p_value > 0.0);
  CHECK(t.p_value < 0.05);
  const std::vector<double> same{2, 2, 2};
  CHECK(mann_whitney_u(same, same, Alternative::TwoSided).p_value == 1.0);
  CHECK_THROWS_AS(mann_whitney_u(std::vector<double>{}, same, Alternative::Greater), ValidationError);
}

TEST_CASE("U distribution counts") {
  const auto c = mann_whitney_u_counts(2, 2);
  CHECK(c == std::vector<double>{1, 1, 2, 1, 1});
  const auto big = mann_whitney_u_counts(6, 6);
  CHECK(std::accumulate(big.begin(), big.end(), 0.0) == 924.0);
}

TEST_CASE("Fisher combination") {
  const std::vector<double> one{0.037};
  CHECK(fisher_combine(one).p_value == doctest::Approx(0.037).epsilon(1e-12));
  const std::vector<double> ones(7, 1.0);
  CHECK(fisher_combine(ones).p_value == doctest::Approx(1.0).epsilon(1e-12));
  const std::vector<double> zeros{0.0, 0.5};
  const auto z = fisher_combine(zeros);
  CHECK(z.clamped);
  CHECK(z.p_value < 1e-200);
  CHECK(fisher_combine(std::vector<double>{0.01, 0.02}).degrees_of_freedom == 4);
  CHECK_THROWS_AS(fisher_combine(std::vector<double>{}), ValidationError);
  CHECK_THROWS_AS(fisher_combine(std::vector<double>{1.5}), ValidationError);
  CHECK_THROWS_AS(fisher_combine(std::vector<double>{std::nan("")}), ValidationError);
}

TEST_CASE("Spearman exhaustive p equals n! enumeration for n <= 6") {
  Rng rng(17);
  for (std::size_t n = 3; n <= 6; ++n) {
    for (int rep = 0; rep < 40; ++rep) {
      std::vector<double> x(n), y(n);
      std::iota(x.begin(), x.end(), 1.0);
      std::iota(y.begin(), y.end(), 1.0);
      rng.shuffle(x);
      rng.shuffle(y);
      for (auto& v : y) v = v * 3.0 - 1.0;
      const auto r = spearman_permutation(x, y);
      REQUIRE(r.exact);
      REQUIRE(r.p_value == tlr::testing::brute_spearman_p(x, y));
    }
  }
}

TEST_CASE("Spearman rho and edge cases") {
  const std::vector<double> x{1, 2, 3}, y{1, 3, 2};
  const auto r = spearman_permutation(x, y);
  CHECK(r.rho == doctest::Approx(0.5));
  // |rho| >= 0.5 holds for every ordering of three values
  CHECK(r.p_value == doctest::Approx(1.0));
  CHECK(r.permutations == 6);
  const std::vector<double> mono{1, 2, 3, 4, 5}, rev{50, 40, 30, 20, 10};
  const auto m = spearman_permutation(mono, rev);
  CHECK(m.rho == doctest::Approx(-1.0));
  CHECK(m.p_value == doctest::Approx(2.0 / 120.0));
  const std::vector<double> flat{4, 4, 4, 4, 4};
  CHECK(spearman_permutation(mono, flat).undefined);
  CHECK_THROWS_AS(spearman_permutation(std::vector<double>{1, 2}, std::vector<double>{1, 2}), ValidationError);
  CHECK_THROWS_AS(spearman_permutation(mono, x), ValidationError);
  // ties use Pearson on average ranks
  const std::vector<double> tx{1, 2, 2, 3}, ty{1, 2, 3, 4};
  CHECK(spearman_permutation(tx, ty).rho == doctest::Approx(0.9486832980505138));
}

TEST_CASE("Spearman Monte-Carlo beyond the exhaustive limit") {
  std::vector<double> x(12);
  std::iota(x.begin(), x.end(), 0.0);
  std::vector<double> y(x.rbegin(), x.rend());
  std::swap(y[3], y[8]);
  const auto a = spearman_permutation(x, y, PermutationPlan::monte_carlo(2000), 5);
  const auto b = spearman_permutation(x, y, PermutationPlan::monte_carlo(2000), 5);
  CHECK_FALSE(a.exact);
  CHECK(a.p_value == b.p_value);
  CHECK(a.permutations == 2001);
  CHECK(a.p_value >= 1.0 / 2001.0);
}

TEST_CASE("Wilcoxon exact p equals 2^n enumeration for n <= 10") {
  Rng rng(23);
  for (std::size_t n = 1; n <= 10; ++n) {
    for (int rep = 0; rep < 30; ++rep) {
      std::vector<double> x(n), y(n);
      for (std::size_t i = 0; i < n; ++i) {
        // small integer grid so ties and zeros occur
        x[i] = static_cast<double>(rng.uniform_below(6));
        y[i] = static_cast<double>(rng.uniform_below(6));
      }
      const auto r = wilcoxon_signed_rank(x, y);
      REQUIRE(r.p_value == tlr::testing::brute_wilcoxon_p(x, y));
    }
  }
}

TEST_CASE("Wilcoxon statistics") {
  const std::vector<double> x{5, 6, 7, 8}, y{1, 2, 3, 9};
  const auto r = wilcoxon_signed_rank(x, y);
  // differences 4, 4, 4, -1: ranks 3, 3, 3, 1
  CHECK(r.w_plus == 9.0);
  CHECK(r.w_minus == 1.0);
  CHECK(r.statistic == 1.0);
  CHECK(r.n_nonzero == 4);
  const std::vector<double> same{1, 2};
  CHECK(wilcoxon_signed_rank(same, same).all_zero);
  CHECK(wilcoxon_signed_rank(same, same).p_value == 1.0);
  // 20 positive differences: normal approximation
  std::vector<double> a(20), b(20, 0.0);
  std::iota(a.begin(), a.end(), 1.0);
  const auto big = wilcoxon_signed_rank(a, b);
  CHECK_FALSE(big.exact);
  CHECK(big.p_value < 1e-3);
  CHECK_THROWS_AS(wilcoxon_signed_rank(a, same), ValidationError);
}

TEST_CASE("difference ratio on a planted corpus matches the closed form") {
  tlr::testing::TempDir dir("planted");
  tlr::testing::write_planted_corpus(dir.path(), 3);
  const Project p = load_project(dir.path());
  const auto r = difference_ratio(p, {50, 9});
  const double p_true = 3.0 / 7.0, p_false = 1.0 / 9.0;
  CHECK(r.p_true == doctest::Approx(p_true).epsilon(1e-15));
  CHECK(r.p_false == doctest::Approx(p_false).epsilon(1e-15));
  REQUIRE(r.difference_ratio.has_value());
  CHECK(*r.difference_ratio == doctest::Approx((p_true - p_false) / p_false).epsilon(1e-14));
  CHECK(r.n_true == 3);
  CHECK(r.n_false_pool == 6);
  CHECK(r.resample_means.size() == 50);
  CHECK(r.resample_seeds == derive_seeds(9, 50));
  CHECK_FALSE(r.sampled_with_replacement);
  CHECK(r.fisher_df == 100);
}

TEST_CASE("difference ratio determinism and degenerate cases") {
  const Project p = load_project(tlr::testing::data_dir() / "heritage");
  const auto a = difference_ratio(p, {20, 1});
  const auto b = difference_ratio(p, {20, 1});
  CHECK(a.resample_means == b.resample_means);
  CHECK(a.combined_p == b.combined_p);
  const auto c = difference_ratio(p, {20, 2});
  CHECK(a.resample_means != c.resample_means);
  CHECK_THROWS_AS(difference_ratio(p, {0, 1}), ValidationError);
  const auto j = to_json(a);
  CHECK(j.at("n_resamples") == 20);
  CHECK(to_markdown(a, "heritage").find("| heritage |") != std::string::npos);
}
