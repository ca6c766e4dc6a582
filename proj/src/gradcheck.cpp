#include "timedistill/gradcheck.hpp"

#include "timedistill/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace timedistill::trainer {

GradCheckReport gradient_check(const std::function<double()>& loss, ParamList& params, const ParamList& analytic,
                               double h, std::size_t max_coords, std::uint64_t seed) {
    if (params.size() != analytic.size()) throw UsageError("gradient_check: parameter/gradient lists differ");
    std::mt19937_64 rng(seed);
    GradCheckReport report;
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto& p = params[t].values;
        const auto& a = analytic[t].values;
        if (p.size() != a.size()) throw UsageError("gradient_check: shape mismatch for '" + params[t].name + "'");
        std::vector<Eigen::Index> coords(static_cast<std::size_t>(p.size()));
        std::iota(coords.begin(), coords.end(), 0);
        if (coords.size() > max_coords) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(max_coords);
        }
        TensorCheck tc{params[t].name, coords.size(), 0.0};
        for (const auto i : coords) {
            const double saved = p(i);
            p(i) = saved + h;
            const double up = loss();
            p(i) = saved - h;
            const double down = loss();
            p(i) = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double err = std::abs(a(i) - numeric) / (std::abs(a(i)) + std::abs(numeric) + 1e-12);
            tc.max_rel_error = std::max(tc.max_rel_error, err);
        }
        report.max_rel_error = std::max(report.max_rel_error, tc.max_rel_error);
        report.tensors.push_back(std::move(tc));
    }
    return report;
}

std::string GradCheckReport::to_json() const {
    nlohmann::ordered_json j;
    j["max_rel_error"] = max_rel_error;
    j["tensors"] = nlohmann::ordered_json::array();
    for (const auto& t : tensors)
        j["tensors"].push_back({{"name", t.name}, {"coords_checked", t.coords_checked}, {"max_rel_error", t.max_rel_error}});
    return j.dump(2);
}

}  // namespace timedistill::trainer
