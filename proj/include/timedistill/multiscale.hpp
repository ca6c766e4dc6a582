#pragma once

#include "timedistill/types.hpp"

#include <cstddef>

namespace timedistill::multiscale {

/// levels[0] is the input; levels[m] is levels[m-1] averaged pairwise along time.
struct ScalePyramid {
    std::vector<Matrix> levels;

    std::size_t M() const { return levels.empty() ? 0 : levels.size() - 1; }
};

/// Fixed stride-2 averaging: out[i] = (x[2i] + x[2i+1]) / 2; an odd trailing row is dropped.
Matrix downsample(const Matrix& x);

/// Adjoint of downsample for an input of `input_rows` rows.
Matrix downsample_adjoint(const Matrix& grad_out, Eigen::Index input_rows);

ScalePyramid build_pyramid(const Matrix& x, std::size_t M);

/// Folds per-level gradients back onto the level-0 input.
Matrix pyramid_adjoint(const std::vector<Matrix>& level_grads);

/// (1/(M+1)) Σ_m mean_elements (teacher_m - student_m)^2.
double scale_loss(const ScalePyramid& teacher, const ScalePyramid& student);

struct ScaleLossGrad {
    double loss = 0.0;
    Tensor3 grad_teacher;  // d loss / d teacher level-0 input
    Tensor3 grad_student;  // d loss / d student level-0 input
};

/// Batched scale loss: each level's squared error is averaged over all B·L_m·C elements.
double batch_scale_loss(const Tensor3& teacher, const Tensor3& student, std::size_t M);
ScaleLossGrad batch_scale_loss_grad(const Tensor3& teacher, const Tensor3& student, std::size_t M);

}  // namespace timedistill::multiscale
