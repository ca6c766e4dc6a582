#include "timedistill/theorems.hpp"

#include "timedistill/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace timedistill::trainer {

Margin verify_theorem1(std::span<const double> y, std::span<const double> y_hat_s,
                       const std::vector<std::vector<double>>& teacher_levels, double eta) {
    if (!(eta > 0.0)) throw UsageError("theorem 1: eta must be positive");
    if (y.size() != y_hat_s.size() || y.empty() || teacher_levels.empty())
        throw UsageError("theorem 1: inputs must be nonempty and aligned");
    for (const auto& t : teacher_levels)
        if (t.size() != y.size()) throw UsageError("theorem 1: teacher level not aligned with y");

    const double levels = static_cast<double>(teacher_levels.size());
    const double lambda = 1.0 / (1.0 + eta);
    Margin out{0.0, std::numeric_limits<double>::infinity()};
    for (std::size_t i = 0; i < y.size(); ++i) {
        double scale_term = 0.0;
        double teacher_mean = 0.0;
        for (const auto& t : teacher_levels) {
            scale_term += (y_hat_s[i] - t[i]) * (y_hat_s[i] - t[i]);
            teacher_mean += t[i];
        }
        teacher_mean /= levels;
        const double lhs = (y_hat_s[i] - y[i]) * (y_hat_s[i] - y[i]) + eta / levels * scale_term;
        const double mixed = lambda * y[i] + (1.0 - lambda) * teacher_mean;
        const double rhs = (y_hat_s[i] - mixed) * (y_hat_s[i] - mixed);
        const double margin = lhs - rhs;
        out.mean += margin;
        out.min = std::min(out.min, margin);
    }
    out.mean /= static_cast<double>(y.size());
    return out;
}

namespace {

void check_distribution(std::span<const double> q, const char* name) {
    double sum = 0.0;
    for (const double v : q) {
        if (!(v > 0.0) || !std::isfinite(v))
            throw UsageError(std::string("theorem 2: ") + name + " must be strictly positive");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw UsageError(std::string("theorem 2: ") + name + " must sum to 1");
}

double kl(std::span<const double> p, std::span<const double> q) {
    double acc = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) acc += p[k] * std::log(p[k] / q[k]);
    return acc;
}

}  // namespace

double verify_theorem2(std::span<const double> q_y, std::span<const double> q_t, std::span<const double> q_s,
                       double eta) {
    if (!(eta > 0.0)) throw UsageError("theorem 2: eta must be positive");
    if (q_y.size() != q_t.size() || q_y.size() != q_s.size() || q_y.empty())
        throw UsageError("theorem 2: distributions must have equal, nonzero length");
    check_distribution(q_y, "q_y");
    check_distribution(q_t, "q_t");
    check_distribution(q_s, "q_s");
    double mixture = 0.0;
    for (std::size_t k = 0; k < q_y.size(); ++k) {
        const double a = q_y[k] + eta * q_t[k];
        mixture += a * std::log(a / ((1.0 + eta) * q_s[k]));
    }
    return kl(q_y, q_s) + eta * kl(q_t, q_s) - mixture;
}

SuiteResult theorem1_suite(std::size_t trials, std::uint64_t seed) {
    const double etas[] = {0.1, 1.0, 10.0};
    const std::size_t Ms[] = {0, 1, 3};
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    SuiteResult res{"theorem1", trials, std::numeric_limits<double>::infinity(), {}};
    for (const double eta : etas)
        for (const auto M : Ms) res.cases.push_back({eta, M, 0, std::numeric_limits<double>::infinity()});

    constexpr std::size_t kWidth = 4;
    std::vector<double> y(kWidth), ys(kWidth);
    for (std::size_t i = 0; i < trials; ++i) {
        auto& c = res.cases[i % res.cases.size()];
        std::vector<std::vector<double>> levels(c.M + 1, std::vector<double>(kWidth));
        for (auto& v : y) v = u(rng);
        for (auto& v : ys) v = u(rng);
        for (auto& l : levels)
            for (auto& v : l) v = u(rng);
        const auto m = verify_theorem1(y, ys, levels, c.eta);
        ++c.trials;
        c.min_margin = std::min(c.min_margin, m.min);
        res.min_margin = std::min(res.min_margin, m.min);
    }
    return res;
}

SuiteResult theorem2_suite(std::size_t trials, std::uint64_t seed) {
    const double etas[] = {0.5, 1.0, 2.0};
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> logit(0.0, 2.0);
    std::uniform_int_distribution<std::size_t> bins(2, 48);
    SuiteResult res{"theorem2", trials, std::numeric_limits<double>::infinity(), {}};
    for (const double eta : etas) res.cases.push_back({eta, 0, 0, std::numeric_limits<double>::infinity()});

    auto draw = [&](std::size_t n) {
        std::vector<double> q(n);
        double top = -std::numeric_limits<double>::infinity();
        for (auto& v : q) {
            v = logit(rng);
            top = std::max(top, v);
        }
        double sum = 0.0;
        for (auto& v : q) sum += (v = std::exp(v - top));
        for (auto& v : q) v /= sum;
        return q;
    };
    for (std::size_t i = 0; i < trials; ++i) {
        auto& c = res.cases[i % res.cases.size()];
        const std::size_t n = bins(rng);
        const auto qy = draw(n), qt = draw(n), qs = draw(n);
        const double m = verify_theorem2(qy, qt, qs, c.eta);
        ++c.trials;
        c.min_margin = std::min(c.min_margin, m);
        res.min_margin = std::min(res.min_margin, m);
    }
    return res;
}

std::string suites_to_json(const std::vector<SuiteResult>& suites) {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& s : suites) {
        nlohmann::ordered_json cases = nlohmann::ordered_json::array();
        for (const auto& c : s.cases) {
            nlohmann::ordered_json e = {{"eta", c.eta}};
            if (s.name == "theorem1") e["M"] = c.M;
            e["trials"] = c.trials;
            e["min_margin"] = c.min_margin;
            cases.push_back(e);
        }
        j.push_back({{"name", s.name},
                     {"trials", s.trials},
                     {"min_margin", s.min_margin},
                     {"passed", s.passed()},
                     {"cases", cases}});
    }
    return j.dump(2);
}

}  // namespace timedistill::trainer
