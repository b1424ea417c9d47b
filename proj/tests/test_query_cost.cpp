#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "estas/query_cost.hpp"
#include "estas/rng.hpp"

using namespace estas;

namespace {

// Independent oracle: enumerate every placement of the N_t target positions
// among N slots and count where the PN-th target lands.
struct Enumerated {
    std::vector<double> prob;  // prob[n] for n in [0, N]
    double expectation = 0.0;
};

void enumerate_rec(std::size_t next, std::size_t remaining, std::size_t n,
                   std::vector<std::size_t>& chosen, std::size_t pn,
                   std::vector<std::uint64_t>& counts, std::uint64_t& total) {
    if (remaining == 0) {
        ++total;
        ++counts[chosen[pn - 1] + 1];  // draws = position of the PN-th target + 1
        return;
    }
    if (next >= n) return;
    if (n - next < remaining) return;
    chosen.push_back(next);
    enumerate_rec(next + 1, remaining - 1, n, chosen, pn, counts, total);
    chosen.pop_back();
    enumerate_rec(next + 1, remaining, n, chosen, pn, counts, total);
}

Enumerated enumerate_exact(std::size_t n, std::size_t targets, std::size_t pn) {
    std::vector<std::uint64_t> counts(n + 1, 0);
    std::uint64_t total = 0;
    std::vector<std::size_t> chosen;
    enumerate_rec(0, targets, n, chosen, pn, counts, total);
    Enumerated e;
    e.prob.assign(n + 1, 0.0);
    for (std::size_t i = 0; i <= n; ++i) {
        e.prob[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
        e.expectation += static_cast<double>(i) * e.prob[i];
    }
    return e;
}

}  // namespace

TEST_CASE("pn rounding") {
    CHECK(pn(50000, 0.01) == 500);
    CHECK(pn(127000, 0.01) == 1270);
    CHECK(pn(100, 1.0) == 100);
    CHECK(pn(10, 0.001) == 1);  // rounds to zero, clamped to one
    CHECK_THROWS_AS(pn(100, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(pn(100, -0.5), std::invalid_argument);
    CHECK_THROWS_AS(pn(100, 1.5), std::invalid_argument);
}

TEST_CASE("budget validation") {
    PoisonBudget bad{10, 3, 0};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    PoisonBudget bad2{10, 11, 1};
    CHECK_THROWS_AS(bad2.validate(), std::invalid_argument);
    PoisonBudget bad3{10, 3, 4};
    CHECK_THROWS_AS(bad3.validate(), std::invalid_argument);
}

TEST_CASE("prob_exact matches hand-enumerable cases") {
    SUBCASE("all targets: success forced at exactly PN draws") {
        PoisonBudget b{5, 5, 3};
        CHECK(prob_exact(3, b) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(prob_exact(4, b) == 0.0);
        CHECK(prob_exact(2, b) == 0.0);
    }
    SUBCASE("N=2, one target") {
        PoisonBudget b{2, 1, 1};
        CHECK(prob_exact(1, b) == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(prob_exact(2, b) == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("N=4, two targets, first hit") {
        PoisonBudget b{4, 2, 1};
        CHECK(prob_exact(1, b) == doctest::Approx(1.0 / 2.0).epsilon(1e-12));
        CHECK(prob_exact(2, b) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
        CHECK(prob_exact(3, b) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
        CHECK(prob_exact(4, b) == 0.0);
    }
}

TEST_CASE("prob_exact agrees with the enumeration oracle") {
    Rng rng(71);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 4 + rng.next_below(8);           // up to 11
        const std::size_t targets = 1 + rng.next_below(n - 1);  // < n
        const std::size_t need = 1 + rng.next_below(targets);
        Enumerated oracle = enumerate_exact(n, targets, need);
        PoisonBudget b{n, targets, need};
        for (std::size_t k = 0; k <= n; ++k) {
            CHECK(prob_exact(k == 0 ? n + 5 : k, b) ==
                  doctest::Approx(k == 0 ? 0.0 : oracle.prob[k]).epsilon(1e-10));
        }
        CHECK(aq_exact(b) == doctest::Approx(oracle.expectation).epsilon(1e-10));
    }
}

TEST_CASE("probabilities sum to one over the support") {
    const PoisonBudget budgets[] = {
        {10, 3, 1}, {50, 10, 4}, {200, 20, 5}, {500, 73, 12}, {64, 32, 16},
    };
    for (const PoisonBudget& b : budgets) {
        double sum = 0.0;
        for (std::uint64_t n = b.required; n <= support_upper(b); ++n) {
            sum += prob_exact(n, b);
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
}

TEST_CASE("aq_exact matches the closed form and the reference table values") {
    auto closed = [](const PoisonBudget& b) {
        return static_cast<double>(b.required) *
               (static_cast<double>(b.corpus_size) + 1.0) /
               (static_cast<double>(b.target_count) + 1.0);
    };
    SUBCASE("hand case 10/3/1 = 2.75") {
        PoisonBudget b{10, 3, 1};
        CHECK(aq_exact(b) == doctest::Approx(2.75).epsilon(1e-12));
        CHECK(closed(b) == doctest::Approx(2.75).epsilon(1e-12));
    }
    SUBCASE("large reference budgets") {
        CHECK(std::llround(aq_exact(PoisonBudget{50000, 5000, 1})) == 10);
        CHECK(std::llround(aq_exact(PoisonBudget{50000, 500, 1})) == 100);
        CHECK(std::llround(aq_exact(PoisonBudget{127000, 1270, 1})) == 100);
        CHECK(std::llround(aq_exact(PoisonBudget{50000, 500, 500})) == 49901);
        CHECK(std::llround(aq_exact(PoisonBudget{127000, 1270, 1270})) == 126901);
        // The often-quoted 4912 for this budget does not follow from the
        // formula; the formula gives about 4999.
        CHECK(std::llround(aq_exact(PoisonBudget{50000, 5000, 500})) == 4999);
    }
    SUBCASE("random budgets agree with the closed form") {
        Rng rng(5);
        for (int trial = 0; trial < 30; ++trial) {
            const std::size_t n = 10 + rng.next_below(2000);
            const std::size_t targets = 1 + rng.next_below(n);
            const std::size_t need = 1 + rng.next_below(targets);
            PoisonBudget b{n, targets, need};
            CHECK(aq_exact(b) == doctest::Approx(closed(b)).epsilon(1e-9));
        }
    }
}

TEST_CASE("monte carlo oracle") {
    SUBCASE("all-target corpus is deterministic") {
        MonteCarloResult r = aq_montecarlo(PoisonBudget{7, 7, 4}, 500, 1);
        CHECK(r.mean == 4.0);
        CHECK(r.stderr_mean == 0.0);
    }
    SUBCASE("agrees with aq_exact within three standard errors") {
        Rng rng(88);
        for (int trial = 0; trial < 6; ++trial) {
            const std::size_t n = 20 + rng.next_below(300);
            const std::size_t targets = 2 + rng.next_below(n / 2);
            const std::size_t need = 1 + rng.next_below(targets);
            PoisonBudget b{n, targets, need};
            MonteCarloResult mc = aq_montecarlo(b, 20000, hash_seed(3, trial));
            const double exact = aq_exact(b);
            CHECK(std::abs(mc.mean - exact) <= 3.0 * mc.stderr_mean + 1e-9);
        }
    }
    SUBCASE("deterministic given the seed") {
        PoisonBudget b{50, 9, 3};
        MonteCarloResult a = aq_montecarlo(b, 2000, 9);
        MonteCarloResult c = aq_montecarlo(b, 2000, 9);
        CHECK(a.mean == c.mean);
        CHECK(a.stderr_mean == c.stderr_mean);
    }
    SUBCASE("needs at least one trial") {
        CHECK_THROWS_AS(aq_montecarlo(PoisonBudget{5, 2, 1}, 0, 1), std::invalid_argument);
    }
}

TEST_CASE("support bounds") {
    PoisonBudget b{10, 3, 1};
    CHECK(support_upper(b) == 8);
    CHECK(support_upper_loose(b) == 12);  // exceeds N; every extra term is zero
    CHECK(support_upper_loose(b) > b.corpus_size);
    for (std::uint64_t n = support_upper(b) + 1; n <= b.corpus_size; ++n) {
        CHECK(prob_exact(n, b) == 0.0);
    }

    PoisonBudget tight{9, 4, 4};
    CHECK(support_upper(tight) == 9);  // must see everything in the worst case
}

TEST_CASE("aq is monotone decreasing in the target count for PN=1") {
    const std::uint64_t n = 400;
    double prev = aq_exact(PoisonBudget{n, 1, 1});
    for (std::uint64_t targets = 2; targets <= 50; targets += 7) {
        const double cur = aq_exact(PoisonBudget{n, targets, 1});
        CHECK(cur < prev);
        prev = cur;
    }
}
