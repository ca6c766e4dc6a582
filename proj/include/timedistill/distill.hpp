#pragma once

#include "timedistill/student.hpp"
#include "timedistill/teacher.hpp"
#include "timedistill/types.hpp"

#include <string>

namespace timedistill::distill {

struct DistillConfig {
    double alpha = 0.1;  // prediction-level weight
    double beta = 0.5;   // feature-level weight
    double tau = 0.5;
    std::size_t M = 3;
    bool use_scale = true;
    bool use_period = true;
    bool use_pred_level = true;
    bool use_feat_level = true;
    bool use_sup = true;
    bool use_gt_pattern = false;  // replaces the supervised term with its multi-scale/period form
    bool freeze_regressor = false;
    student::NormMode norm = student::NormMode::NonStationary;
    std::size_t D = 512;
    std::size_t T = 720;
    std::size_t S = 96;

    void validate() const;
};

struct LossBreakdown {
    double sup = 0.0;
    double scale_y = 0.0;
    double scale_h = 0.0;
    double period_y = 0.0;
    double period_h = 0.0;
    double gt_scale = 0.0;
    double gt_period = 0.0;
    double total = 0.0;

    LossBreakdown& operator+=(const LossBreakdown& o);
    LossBreakdown& operator*=(double s);
};

/// Term weights after applying flags; zero-weight terms are not evaluated.
struct TermWeights {
    double sup = 0.0;
    double scale_y = 0.0;
    double period_y = 0.0;
    double scale_h = 0.0;
    double period_h = 0.0;
    double gt = 0.0;
};

TermWeights term_weights(const DistillConfig& cfg);

/// Mean squared error over every element of the batch.
double sup_loss(const Tensor3& y_hat, const Tensor3& y);

double gt_pattern_loss(const Tensor3& y_hat, const Tensor3& y, const DistillConfig& cfg);

LossBreakdown total_loss(const Tensor3& y, const student::StudentOutput& student_out,
                         const teacher::TeacherOutputs& teacher_out, const teacher::Regressor& regressor,
                         const DistillConfig& cfg);

struct DistillGradients {
    LossBreakdown loss;
    student::StudentParams student;
    teacher::Regressor regressor;
};

/// Forward, loss, and reverse pass for one batch. Teacher tensors are read only.
DistillGradients distill_gradients(const student::StudentParams& params, const teacher::Regressor& regressor,
                                   const Tensor3& X, const Tensor3& Y, const teacher::TeacherOutputs& teacher_out,
                                   const DistillConfig& cfg);

}  // namespace timedistill::distill
