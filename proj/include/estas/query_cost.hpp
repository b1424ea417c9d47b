#pragma once

#include <cstdint>

namespace estas {

// Attacker's identification budget: a corpus of N unlabeled images holding
// N_t target-class images, of which PN must be found by membership queries.
struct PoisonBudget {
    std::uint64_t corpus_size = 0;   // N
    std::uint64_t target_count = 0;  // N_t
    std::uint64_t required = 0;      // PN

    void validate() const;  // 1 <= PN <= N_t <= N
};

// round(N * r), at least 1. Requires 0 < r <= 1.
std::uint64_t pn(std::uint64_t corpus_size, double ratio);

// Probability that exactly n queries are needed to collect the PN-th
// target: C(N_t,PN) C(N-N_t,n-PN) / C(N,n) * PN/n on the support
// [PN, N-N_t+PN], zero outside. Log-gamma for large N, exact integer
// arithmetic as an internal cross-check when N <= 64.
double prob_exact(std::uint64_t n, const PoisonBudget& budget);

// Sum of n P(n) over the support; verified against the closed form
// PN (N+1) / (N_t+1) to relative 1e-9.
double aq_exact(const PoisonBudget& budget);

struct MonteCarloResult {
    double mean = 0.0;
    double stderr_mean = 0.0;
    std::uint64_t trials = 0;
};

// Simulated draws without replacement until the PN-th target appears.
MonteCarloResult aq_montecarlo(const PoisonBudget& budget, std::uint64_t trials,
                               std::uint64_t seed);

// Tight worst case: all N - N_t non-targets drawn before the final target.
std::uint64_t support_upper(const PoisonBudget& budget);
// The loose bound N - PN + N_t; exceeds N whenever PN < N_t and every extra
// term is zero. Kept for comparison, never used in summation.
std::uint64_t support_upper_loose(const PoisonBudget& budget);

}  // namespace estas
