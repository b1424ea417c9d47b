#include "estas/query_cost.hpp"

#include <cmath>
#include <stdexcept>

#include "estas/rng.hpp"

namespace estas {

namespace {

double log_choose(std::uint64_t n, std::uint64_t k) {
    if (k > n) throw std::invalid_argument("log_choose: k > n");
    return std::lgamma(static_cast<double>(n) + 1.0) -
           std::lgamma(static_cast<double>(k) + 1.0) -
           std::lgamma(static_cast<double>(n - k) + 1.0);
}

// Exact for n <= 64 (fits the 64-bit mantissa of long double).
std::uint64_t choose_u64(std::uint64_t n, std::uint64_t k) {
    if (k > n) return 0;
    if (k > n - k) k = n - k;
    unsigned __int128 r = 1;
    for (std::uint64_t i = 1; i <= k; ++i) {
        r = r * (n - k + i) / i;
    }
    return static_cast<std::uint64_t>(r);
}

double prob_exact_loggamma(std::uint64_t n, const PoisonBudget& b) {
    const double lp = log_choose(b.target_count, b.required) +
                      log_choose(b.corpus_size - b.target_count, n - b.required) -
                      log_choose(b.corpus_size, n);
    return std::exp(lp) * static_cast<double>(b.required) / static_cast<double>(n);
}

double prob_exact_integer(std::uint64_t n, const PoisonBudget& b) {
    const long double c1 = static_cast<long double>(choose_u64(b.target_count, b.required));
    const long double c2 = static_cast<long double>(
        choose_u64(b.corpus_size - b.target_count, n - b.required));
    const long double c3 = static_cast<long double>(choose_u64(b.corpus_size, n));
    return static_cast<double>(c1 * c2 / c3 * static_cast<long double>(b.required) /
                               static_cast<long double>(n));
}

}  // namespace

void PoisonBudget::validate() const {
    if (required < 1 || required > target_count || target_count > corpus_size) {
        throw std::invalid_argument("poison budget must satisfy 1 <= PN <= N_t <= N");
    }
}

std::uint64_t pn(std::uint64_t corpus_size, double ratio) {
    if (!(ratio > 0.0) || ratio > 1.0) {
        throw std::invalid_argument("pn: ratio must lie in (0, 1]");
    }
    const double raw = std::round(static_cast<double>(corpus_size) * ratio);
    return raw < 1.0 ? 1 : static_cast<std::uint64_t>(raw);
}

double prob_exact(std::uint64_t n, const PoisonBudget& budget) {
    budget.validate();
    if (n < budget.required || n > support_upper(budget)) return 0.0;
    const double via_log = prob_exact_loggamma(n, budget);
    if (budget.corpus_size <= 64) {
        const double via_int = prob_exact_integer(n, budget);
        if (std::abs(via_log - via_int) > 1e-12 * std::max(1.0, std::abs(via_int))) {
            throw std::runtime_error("prob_exact: log-gamma and integer routes disagree");
        }
        return via_int;
    }
    return via_log;
}

double aq_exact(const PoisonBudget& budget) {
    budget.validate();
    const std::uint64_t hi = support_upper(budget);
    // Kahan summation; the support can span ~1e5 terms.
    double sum = 0.0, comp = 0.0;
    for (std::uint64_t n = budget.required; n <= hi; ++n) {
        const double term = static_cast<double>(n) * prob_exact(n, budget);
        const double y = term - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    const double closed = static_cast<double>(budget.required) *
                          (static_cast<double>(budget.corpus_size) + 1.0) /
                          (static_cast<double>(budget.target_count) + 1.0);
    if (std::abs(sum - closed) > 1e-9 * closed) {
        throw std::runtime_error("aq_exact: summation disagrees with closed form");
    }
    return sum;
}

MonteCarloResult aq_montecarlo(const PoisonBudget& budget, std::uint64_t trials,
                               std::uint64_t seed) {
    budget.validate();
    if (trials < 1) throw std::invalid_argument("aq_montecarlo: need at least one trial");
    Rng rng(hash_seed(seed, 0xa0a0ULL));
    double sum = 0.0, sum2 = 0.0;
    for (std::uint64_t t = 0; t < trials; ++t) {
        std::uint64_t remaining_targets = budget.target_count;
        std::uint64_t remaining = budget.corpus_size;
        std::uint64_t found = 0, draws = 0;
        while (found < budget.required) {
            ++draws;
            if (rng.next_below(remaining) < remaining_targets) {
                --remaining_targets;
                ++found;
            }
            --remaining;
        }
        const double d = static_cast<double>(draws);
        sum += d;
        sum2 += d * d;
    }
    MonteCarloResult r;
    r.trials = trials;
    r.mean = sum / static_cast<double>(trials);
    if (trials > 1) {
        const double var =
            std::max(0.0, (sum2 - sum * sum / static_cast<double>(trials)) /
                              static_cast<double>(trials - 1));
        r.stderr_mean = std::sqrt(var / static_cast<double>(trials));
    }
    return r;
}

std::uint64_t support_upper(const PoisonBudget& budget) {
    budget.validate();
    return budget.corpus_size - budget.target_count + budget.required;
}

std::uint64_t support_upper_loose(const PoisonBudget& budget) {
    budget.validate();
    return budget.corpus_size - budget.required + budget.target_count;
}

}  // namespace estas
