#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace timedistill::trainer {

struct Margin {
    double mean = 0.0;
    double min = 0.0;
};

/// Mixup bound for the multi-scale loss, elementwise:
///   (ŷ-y)² + η/(M+1) Σ_m (ŷ-t_m)²  -  (ŷ - (λy + (1-λ) mean_m t_m))²,  λ = 1/(1+η).
/// `teacher_levels` holds M+1 vectors aligned with `y`.
Margin verify_theorem1(std::span<const double> y, std::span<const double> y_hat_s,
                       const std::vector<std::vector<double>>& teacher_levels, double eta);

/// Log-sum form of the period-loss mixup bound:
///   KL(q_y‖q_s) + η KL(q_t‖q_s) - Σ_k (q_y+ηq_t) ln((q_y+ηq_t) / ((1+η) q_s)).
double verify_theorem2(std::span<const double> q_y, std::span<const double> q_t, std::span<const double> q_s,
                       double eta);

struct SuiteCase {
    double eta = 0.0;
    std::size_t M = 0;  // unused by the period suite
    std::size_t trials = 0;
    double min_margin = 0.0;
};

struct SuiteResult {
    std::string name;
    std::size_t trials = 0;
    double min_margin = 0.0;
    std::vector<SuiteCase> cases;

    bool passed(double tolerance = 1e-9) const { return min_margin >= -tolerance; }
};

/// Random instances spread evenly over η ∈ {0.1, 1, 10} × M ∈ {0, 1, 3}; values uniform in [-1, 1].
SuiteResult theorem1_suite(std::size_t trials, std::uint64_t seed);

/// Random softmax triples spread evenly over η ∈ {0.5, 1, 2}.
SuiteResult theorem2_suite(std::size_t trials, std::uint64_t seed);

std::string suites_to_json(const std::vector<SuiteResult>& suites);

}  // namespace timedistill::trainer
