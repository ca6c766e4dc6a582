#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

namespace timedistill {

/// Column-major [length × channels] block; each channel is a contiguous column.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// A batch of equally-shaped [length × channels] samples, indexed by sample.
using Tensor3 = std::vector<Matrix>;

inline bool same_shape(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols();
}

bool same_shape(const Tensor3& a, const Tensor3& b);
bool all_finite(const Tensor3& t);

}  // namespace timedistill

#include <string>

namespace timedistill {

/// Named flat view onto one parameter tensor's storage.
struct ParamSlot {
    std::string name;
    Eigen::Map<Vector> values;
};

using ParamList = std::vector<ParamSlot>;

template <class Derived>
ParamSlot make_slot(std::string name, Eigen::PlainObjectBase<Derived>& t) {
    return ParamSlot{std::move(name), Eigen::Map<Vector>(t.data(), t.size())};
}

}  // namespace timedistill
