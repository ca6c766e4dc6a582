#pragma once

#include "timedistill/types.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace timedistill::trainer {

struct TensorCheck {
    std::string name;
    std::size_t coords_checked = 0;
    double max_rel_error = 0.0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::vector<TensorCheck> tensors;

    std::string to_json() const;
};

/// Central-difference check of `analytic` against `loss`, which must read the
/// current contents of `params`. At most `max_coords` random coordinates per
/// tensor; relative error |a - n| / (|a| + |n| + 1e-12).
GradCheckReport gradient_check(const std::function<double()>& loss, ParamList& params, const ParamList& analytic,
                               double h = 1e-5, std::size_t max_coords = 200, std::uint64_t seed = 0);

}  // namespace timedistill::trainer
