#include "timedistill/distill.hpp"

#include "timedistill/error.hpp"
#include "timedistill/multiscale.hpp"
#include "timedistill/spectral.hpp"

namespace timedistill::distill {

void DistillConfig::validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0)) throw UsageError("alpha and beta must be non-negative");
    if (!(tau > 0.0)) throw UsageError("tau must be positive");
    if (D < 2) throw UsageError("D must be at least 2 for feature spectra");
    if ((S >> M) < 1) throw UsageError("M too large for horizon S");
    if ((D >> M) < 1) throw UsageError("M too large for hidden width D");
}

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
    sup += o.sup;
    scale_y += o.scale_y;
    scale_h += o.scale_h;
    period_y += o.period_y;
    period_h += o.period_h;
    gt_scale += o.gt_scale;
    gt_period += o.gt_period;
    total += o.total;
    return *this;
}

LossBreakdown& LossBreakdown::operator*=(double s) {
    sup *= s;
    scale_y *= s;
    scale_h *= s;
    period_y *= s;
    period_h *= s;
    gt_scale *= s;
    gt_period *= s;
    total *= s;
    return *this;
}

TermWeights term_weights(const DistillConfig& cfg) {
    TermWeights w;
    w.sup = cfg.use_sup && !cfg.use_gt_pattern ? 1.0 : 0.0;
    w.gt = cfg.use_gt_pattern ? 1.0 : 0.0;
    const double a = cfg.use_pred_level ? cfg.alpha : 0.0;
    const double b = cfg.use_feat_level ? cfg.beta : 0.0;
    w.scale_y = cfg.use_scale ? a : 0.0;
    w.period_y = cfg.use_period ? a : 0.0;
    w.scale_h = cfg.use_scale ? b : 0.0;
    w.period_h = cfg.use_period ? b : 0.0;
    return w;
}

double sup_loss(const Tensor3& y_hat, const Tensor3& y) {
    if (!same_shape(y_hat, y) || y.empty()) throw UsageError("sup_loss: shape mismatch");
    double acc = 0.0;
    double n = 0.0;
    for (std::size_t b = 0; b < y.size(); ++b) {
        acc += (y_hat[b] - y[b]).squaredNorm();
        n += static_cast<double>(y[b].size());
    }
    return acc / n;
}

double gt_pattern_loss(const Tensor3& y_hat, const Tensor3& y, const DistillConfig& cfg) {
    if (!same_shape(y_hat, y) || y.empty()) throw UsageError("gt_pattern_loss: shape mismatch");
    return multiscale::batch_scale_loss(y, y_hat, cfg.M) + spectral::batch_period_loss(y, y_hat, cfg.tau);
}

namespace {

void check_alignment(const Tensor3& y, const student::StudentOutput& s, const teacher::TeacherOutputs& t) {
    if (t.y_hat.size() != y.size() || t.h.size() != y.size())
        throw DataError("teacher outputs are not aligned with the batch (" + std::to_string(t.y_hat.size()) +
                        " vs " + std::to_string(y.size()) + " windows)");
    if (!same_shape(t.y_hat, s.y_hat)) throw DataError("teacher prediction shape differs from student");
}

void finish_total(LossBreakdown& l, const TermWeights& w) {
    l.total = w.sup * l.sup + w.scale_y * l.scale_y + w.period_y * l.period_y + w.scale_h * l.scale_h +
              w.period_h * l.period_h + w.gt * (l.gt_scale + l.gt_period);
}

void axpy(Tensor3& acc, double a, const Tensor3& x) {
    if (acc.empty()) {
        acc.reserve(x.size());
        for (const auto& m : x) acc.push_back(a * m);
        return;
    }
    for (std::size_t i = 0; i < x.size(); ++i) acc[i] += a * x[i];
}

}  // namespace

LossBreakdown total_loss(const Tensor3& y, const student::StudentOutput& s, const teacher::TeacherOutputs& t,
                         const teacher::Regressor& regressor, const DistillConfig& cfg) {
    cfg.validate();
    const auto w = term_weights(cfg);
    LossBreakdown l;
    l.sup = sup_loss(s.y_hat, y);
    if (w.scale_y > 0.0 || w.period_y > 0.0 || w.scale_h > 0.0 || w.period_h > 0.0) check_alignment(y, s, t);
    if (w.scale_y > 0.0) l.scale_y = multiscale::batch_scale_loss(t.y_hat, s.y_hat, cfg.M);
    if (w.period_y > 0.0) l.period_y = spectral::batch_period_loss(t.y_hat, s.y_hat, cfg.tau);
    if (w.scale_h > 0.0 || w.period_h > 0.0) {
        const Tensor3 aligned = teacher::regressor_apply(regressor, t.h);
        if (w.scale_h > 0.0) l.scale_h = multiscale::batch_scale_loss(aligned, s.h, cfg.M);
        if (w.period_h > 0.0) l.period_h = spectral::batch_period_loss(aligned, s.h, cfg.tau);
    }
    if (w.gt > 0.0) {
        l.gt_scale = multiscale::batch_scale_loss(y, s.y_hat, cfg.M);
        l.gt_period = spectral::batch_period_loss(y, s.y_hat, cfg.tau);
    }
    finish_total(l, w);
    return l;
}

DistillGradients distill_gradients(const student::StudentParams& params, const teacher::Regressor& regressor,
                                   const Tensor3& X, const Tensor3& Y, const teacher::TeacherOutputs& t,
                                   const DistillConfig& cfg) {
    cfg.validate();
    const auto w = term_weights(cfg);
    student::StudentTrace trace;
    const auto s = student::forward(params, X, &trace);

    DistillGradients out;
    auto& l = out.loss;
    l.sup = sup_loss(s.y_hat, Y);
    Tensor3 g_y;
    Tensor3 g_h;
    if (w.sup > 0.0) {
        double n = 0.0;
        for (const auto& m : Y) n += static_cast<double>(m.size());
        g_y.reserve(Y.size());
        for (std::size_t b = 0; b < Y.size(); ++b) g_y.push_back((2.0 * w.sup / n) * (s.y_hat[b] - Y[b]));
    }
    const bool any_kd = w.scale_y > 0.0 || w.period_y > 0.0 || w.scale_h > 0.0 || w.period_h > 0.0;
    if (any_kd) check_alignment(Y, s, t);
    if (w.scale_y > 0.0) {
        auto g = multiscale::batch_scale_loss_grad(t.y_hat, s.y_hat, cfg.M);
        l.scale_y = g.loss;
        axpy(g_y, w.scale_y, g.grad_student);
    }
    if (w.period_y > 0.0) {
        auto g = spectral::batch_period_loss_grad(t.y_hat, s.y_hat, cfg.tau);
        l.period_y = g.loss;
        axpy(g_y, w.period_y, g.grad_student);
    }
    out.regressor = regressor.zeros_like();
    if (w.scale_h > 0.0 || w.period_h > 0.0) {
        const Tensor3 aligned = teacher::regressor_apply(regressor, t.h);
        Tensor3 g_aligned;
        if (w.scale_h > 0.0) {
            auto g = multiscale::batch_scale_loss_grad(aligned, s.h, cfg.M);
            l.scale_h = g.loss;
            axpy(g_h, w.scale_h, g.grad_student);
            axpy(g_aligned, w.scale_h, g.grad_teacher);
        }
        if (w.period_h > 0.0) {
            auto g = spectral::batch_period_loss_grad(aligned, s.h, cfg.tau);
            l.period_h = g.loss;
            axpy(g_h, w.period_h, g.grad_student);
            axpy(g_aligned, w.period_h, g.grad_teacher);
        }
        if (!cfg.freeze_regressor) out.regressor = teacher::regressor_backward(regressor, t.h, g_aligned);
    }
    if (w.gt > 0.0) {
        auto gs = multiscale::batch_scale_loss_grad(Y, s.y_hat, cfg.M);
        auto gp = spectral::batch_period_loss_grad(Y, s.y_hat, cfg.tau);
        l.gt_scale = gs.loss;
        l.gt_period = gp.loss;
        axpy(g_y, w.gt, gs.grad_student);
        axpy(g_y, w.gt, gp.grad_student);
    }
    finish_total(l, w);
    out.student = student::backward(params, trace, g_y, g_h);
    return out;
}

}  // namespace timedistill::distill
