#include "timedistill/multiscale.hpp"

#include "timedistill/error.hpp"

#include <string>

namespace timedistill::multiscale {

Matrix downsample(const Matrix& x) {
    if (x.rows() < 2) throw UsageError("downsample needs at least 2 rows, got " + std::to_string(x.rows()));
    const Eigen::Index half = x.rows() / 2;
    Matrix out(half, x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c)
        for (Eigen::Index i = 0; i < half; ++i) out(i, c) = 0.5 * (x(2 * i, c) + x(2 * i + 1, c));
    return out;
}

Matrix downsample_adjoint(const Matrix& grad_out, Eigen::Index input_rows) {
    Matrix g = Matrix::Zero(input_rows, grad_out.cols());
    for (Eigen::Index c = 0; c < grad_out.cols(); ++c) {
        for (Eigen::Index i = 0; i < grad_out.rows(); ++i) {
            g(2 * i, c) = 0.5 * grad_out(i, c);
            g(2 * i + 1, c) = 0.5 * grad_out(i, c);
        }
    }
    return g;
}

ScalePyramid build_pyramid(const Matrix& x, std::size_t M) {
    if ((static_cast<std::size_t>(x.rows()) >> M) < 1) {
        throw UsageError("pyramid depth M=" + std::to_string(M) + " too large for length " +
                         std::to_string(x.rows()));
    }
    ScalePyramid p;
    p.levels.reserve(M + 1);
    p.levels.push_back(x);
    for (std::size_t m = 1; m <= M; ++m) p.levels.push_back(downsample(p.levels.back()));
    return p;
}

Matrix pyramid_adjoint(const std::vector<Matrix>& level_grads) {
    Matrix acc = level_grads.back();
    for (std::size_t m = level_grads.size() - 1; m > 0; --m)
        acc = level_grads[m - 1] + downsample_adjoint(acc, level_grads[m - 1].rows());
    return acc;
}

namespace {

void check_compatible(const ScalePyramid& a, const ScalePyramid& b) {
    if (a.levels.size() != b.levels.size() || a.levels.empty())
        throw UsageError("scale_loss: pyramids have different depths");
    for (std::size_t m = 0; m < a.levels.size(); ++m) {
        if (!same_shape(a.levels[m], b.levels[m]))
            throw UsageError("scale_loss: level " + std::to_string(m) + " shapes differ");
    }
}

}  // namespace

double scale_loss(const ScalePyramid& teacher, const ScalePyramid& student) {
    check_compatible(teacher, student);
    double total = 0.0;
    for (std::size_t m = 0; m < teacher.levels.size(); ++m)
        total += (teacher.levels[m] - student.levels[m]).squaredNorm() / static_cast<double>(teacher.levels[m].size());
    return total / static_cast<double>(teacher.levels.size());
}

double batch_scale_loss(const Tensor3& teacher, const Tensor3& student, std::size_t M) {
    if (!same_shape(teacher, student) || teacher.empty()) throw UsageError("scale_loss: batch shapes differ");
    double acc = 0.0;
    for (std::size_t b = 0; b < teacher.size(); ++b)
        acc += scale_loss(build_pyramid(teacher[b], M), build_pyramid(student[b], M));
    return acc / static_cast<double>(teacher.size());
}

ScaleLossGrad batch_scale_loss_grad(const Tensor3& teacher, const Tensor3& student, std::size_t M) {
    if (!same_shape(teacher, student) || teacher.empty()) throw UsageError("scale_loss: batch shapes differ");
    ScaleLossGrad out;
    const double batch = static_cast<double>(teacher.size());
    const double levels = static_cast<double>(M + 1);
    for (std::size_t b = 0; b < teacher.size(); ++b) {
        const auto pt = build_pyramid(teacher[b], M);
        const auto ps = build_pyramid(student[b], M);
        std::vector<Matrix> gs(M + 1);
        for (std::size_t m = 0; m <= M; ++m) {
            const Matrix diff = ps.levels[m] - pt.levels[m];
            const double n = static_cast<double>(diff.size());
            out.loss += diff.squaredNorm() / n / levels / batch;
            gs[m] = (2.0 / (n * levels * batch)) * diff;
        }
        Matrix g = pyramid_adjoint(gs);
        out.grad_teacher.push_back(-g);
        out.grad_student.push_back(std::move(g));
    }
    return out;
}

}  // namespace timedistill::multiscale
