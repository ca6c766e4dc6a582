#include "timedistill/spectral.hpp"

#include "timedistill/error.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

namespace timedistill::spectral {

namespace {

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

}  // namespace

FftPlan::FftPlan(std::size_t n) : n_(n) {
    if (n == 0) throw UsageError("FFT length must be positive");
    core_ = is_pow2(n) ? n : next_pow2(2 * n - 1);
    twiddles_.resize(core_ / 2);
    for (std::size_t j = 0; j < core_ / 2; ++j)
        twiddles_[j] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(core_));
    if (is_pow2(n)) return;

    // k² mod 2n keeps the chirp argument small and exact for large k.
    chirp_.resize(n);
    const std::size_t two_n = 2 * n;
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t k2 = (k * k) % two_n;
        chirp_[k] = std::polar(1.0, -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n));
    }
    chirp_filter_.assign(core_, Complex{});
    chirp_filter_[0] = std::conj(chirp_[0]);
    for (std::size_t k = 1; k < n; ++k) {
        chirp_filter_[k] = std::conj(chirp_[k]);
        chirp_filter_[core_ - k] = std::conj(chirp_[k]);
    }
    radix2(chirp_filter_, false);
}

void FftPlan::radix2(std::vector<Complex>& a, bool inverse) const {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t stride = core_ / len;
        const std::size_t half = len / 2;
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t j = 0; j < half; ++j) {
                Complex w = twiddles_[j * stride];
                if (inverse) w = std::conj(w);
                const Complex u = a[i + j];
                const Complex v = a[i + j + half] * w;
                a[i + j] = u + v;
                a[i + j + half] = u - v;
            }
        }
    }
}

std::vector<Complex> FftPlan::forward(std::span<const Complex> x) const {
    if (x.size() != n_) throw UsageError("FFT plan length mismatch");
    if (chirp_.empty()) {
        std::vector<Complex> a(x.begin(), x.end());
        radix2(a, false);
        return a;
    }
    std::vector<Complex> a(core_, Complex{});
    for (std::size_t k = 0; k < n_; ++k) a[k] = x[k] * chirp_[k];
    radix2(a, false);
    for (std::size_t k = 0; k < core_; ++k) a[k] *= chirp_filter_[k];
    radix2(a, true);
    const double scale = 1.0 / static_cast<double>(core_);
    std::vector<Complex> out(n_);
    for (std::size_t k = 0; k < n_; ++k) out[k] = a[k] * scale * chirp_[k];
    return out;
}

const FftPlan& plan_for(std::size_t n) {
    static std::mutex mu;
    static std::map<std::size_t, std::unique_ptr<FftPlan>> cache;
    std::lock_guard lock(mu);
    auto& slot = cache[n];
    if (!slot) slot = std::make_unique<FftPlan>(n);
    return *slot;
}

std::vector<Complex> fft(std::span<const Complex> x) { return plan_for(x.size()).forward(x); }

std::vector<Complex> fft_real(std::span<const double> x) {
    std::vector<Complex> z(x.begin(), x.end());
    return fft(z);
}

namespace {

std::vector<Complex> column_spectrum(const Matrix& x, Eigen::Index c) {
    const Vector col = x.col(c);
    return fft_real(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())));
}

}  // namespace

Spectrogram dft_amplitude(const Matrix& x) {
    if (x.rows() < 2) throw UsageError("dft_amplitude needs length >= 2, got " + std::to_string(x.rows()));
    const Eigen::Index bins = x.rows() / 2;
    Spectrogram sp;
    sp.source_length = static_cast<std::size_t>(x.rows());
    sp.amp.resize(bins, x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const auto X = column_spectrum(x, c);
        for (Eigen::Index k = 1; k <= bins; ++k) sp.amp(k - 1, c) = std::abs(X[static_cast<std::size_t>(k)]);
    }
    return sp;
}

namespace {

Vector softmax(const Eigen::Ref<const Vector>& a, double tau) {
    const double top = a.maxCoeff();
    Vector e = ((a.array() - top) / tau).exp();
    return e / e.sum();
}

}  // namespace

PeriodDistribution period_distribution(const Spectrogram& sp, double tau) {
    if (!(tau > 0.0)) throw UsageError("temperature must be positive");
    PeriodDistribution pd;
    pd.temperature = tau;
    pd.q.resize(sp.amp.rows(), sp.amp.cols());
    for (Eigen::Index c = 0; c < sp.amp.cols(); ++c) pd.q.col(c) = softmax(sp.amp.col(c), tau);
    return pd;
}

namespace {

double column_kl(const Eigen::Ref<const Vector>& qt, const Eigen::Ref<const Vector>& qs) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < qt.size(); ++k) {
        if (qt(k) <= 0.0) continue;  // 0 ln 0 = 0
        acc += qt(k) * (std::log(qt(k)) - std::log(std::max(qs(k), kLogFloor)));
    }
    return acc;
}

// Softmax backward: d/da_k given d/dq and q = softmax(a/τ).
Vector softmax_backward(const Vector& q, const Vector& g, double tau) {
    const double mean = q.dot(g);
    return (q.array() * (g.array() - mean) / tau).matrix();
}

// Pulls an amplitude-bin gradient back to the real signal: d|X_k|/dx_n summed over bins.
Vector amplitude_backward(const std::vector<Complex>& X, const Vector& g_amp, std::size_t length) {
    std::vector<Complex> w(length, Complex{});
    for (Eigen::Index k = 1; k <= g_amp.size(); ++k) {
        const Complex z = X[static_cast<std::size_t>(k)];
        const double mag = std::abs(z);
        if (mag < kAmplitudeFloor) continue;
        w[static_cast<std::size_t>(k)] = std::conj(g_amp(k - 1) * z / mag);
    }
    const auto back = fft(w);
    Vector out(static_cast<Eigen::Index>(length));
    for (std::size_t n = 0; n < length; ++n) out(static_cast<Eigen::Index>(n)) = back[n].real();
    return out;
}

struct ColumnGrad {
    double loss;
    Vector grad_student;
    Vector grad_teacher;
};

// KL(softmax(|X_t|/τ) ‖ softmax(|X_s|/τ)) for one column; teacher side optional.
ColumnGrad column_period_grad(const Vector& qt, const std::vector<Complex>* Xt, const Vector& ys, double tau) {
    const auto L = static_cast<std::size_t>(ys.size());
    const auto Xs = fft_real(std::span<const double>(ys.data(), L));
    const Eigen::Index bins = qt.size();
    Vector amp_s(bins);
    for (Eigen::Index k = 1; k <= bins; ++k) amp_s(k - 1) = std::abs(Xs[static_cast<std::size_t>(k)]);
    const Vector qs = softmax(amp_s, tau);

    ColumnGrad out{column_kl(qt, qs), {}, {}};

    Vector g_qs(bins);
    for (Eigen::Index k = 0; k < bins; ++k) g_qs(k) = qs(k) > kLogFloor ? -qt(k) / qs(k) : 0.0;
    out.grad_student = amplitude_backward(Xs, softmax_backward(qs, g_qs, tau), L);

    if (Xt) {
        Vector g_qt(bins);
        for (Eigen::Index k = 0; k < bins; ++k)
            g_qt(k) = qt(k) > 0.0 ? std::log(qt(k)) + 1.0 - std::log(std::max(qs(k), kLogFloor)) : 0.0;
        out.grad_teacher = amplitude_backward(*Xt, softmax_backward(qt, g_qt, tau), L);
    }
    return out;
}

void check_pair(const PeriodDistribution& a, const PeriodDistribution& b) {
    if (a.q.rows() != b.q.rows() || a.q.cols() != b.q.cols())
        throw UsageError("kl_div: distribution shapes differ");
}

}  // namespace

double kl_div(const PeriodDistribution& teacher, const PeriodDistribution& student) {
    check_pair(teacher, student);
    if (teacher.q.cols() == 0) return 0.0;
    double acc = 0.0;
    for (Eigen::Index c = 0; c < teacher.q.cols(); ++c) acc += column_kl(teacher.q.col(c), student.q.col(c));
    return acc / static_cast<double>(teacher.q.cols());
}

PeriodLossGrad period_loss_grad(const Matrix& y_s, const PeriodDistribution& q_t, double tau) {
    if (!(tau > 0.0)) throw UsageError("temperature must be positive");
    if (y_s.rows() < 2) throw UsageError("period loss needs length >= 2");
    if (q_t.q.rows() != y_s.rows() / 2 || q_t.q.cols() != y_s.cols())
        throw UsageError("period_loss_grad: teacher distribution does not match signal shape");
    PeriodLossGrad out;
    out.grad.resize(y_s.rows(), y_s.cols());
    const double channels = static_cast<double>(y_s.cols());
    for (Eigen::Index c = 0; c < y_s.cols(); ++c) {
        const auto g = column_period_grad(q_t.q.col(c), nullptr, y_s.col(c), tau);
        out.loss += g.loss / channels;
        out.grad.col(c) = g.grad_student / channels;
    }
    return out;
}

double batch_period_loss(const Tensor3& teacher, const Tensor3& student, double tau) {
    if (!same_shape(teacher, student) || teacher.empty()) throw UsageError("period loss: batch shapes differ");
    double acc = 0.0;
    for (std::size_t b = 0; b < teacher.size(); ++b) {
        acc += kl_div(period_distribution(dft_amplitude(teacher[b]), tau),
                      period_distribution(dft_amplitude(student[b]), tau));
    }
    return acc / static_cast<double>(teacher.size());
}

BatchPeriodLossGrad batch_period_loss_grad(const Tensor3& teacher, const Tensor3& student, double tau) {
    if (!same_shape(teacher, student) || teacher.empty()) throw UsageError("period loss: batch shapes differ");
    if (!(tau > 0.0)) throw UsageError("temperature must be positive");
    if (teacher.front().rows() < 2) throw UsageError("period loss needs length >= 2");
    BatchPeriodLossGrad out;
    const double scale = 1.0 / (static_cast<double>(teacher.size()) * static_cast<double>(teacher.front().cols()));
    for (std::size_t b = 0; b < teacher.size(); ++b) {
        Matrix gt(teacher[b].rows(), teacher[b].cols());
        Matrix gs(student[b].rows(), student[b].cols());
        for (Eigen::Index c = 0; c < teacher[b].cols(); ++c) {
            const Vector yt = teacher[b].col(c);
            const auto Xt = fft_real(std::span<const double>(yt.data(), static_cast<std::size_t>(yt.size())));
            const Eigen::Index bins = yt.size() / 2;
            Vector amp_t(bins);
            for (Eigen::Index k = 1; k <= bins; ++k) amp_t(k - 1) = std::abs(Xt[static_cast<std::size_t>(k)]);
            const Vector qt = softmax(amp_t, tau);
            const auto g = column_period_grad(qt, &Xt, student[b].col(c), tau);
            out.loss += g.loss * scale;
            gs.col(c) = g.grad_student * scale;
            gt.col(c) = g.grad_teacher * scale;
        }
        out.grad_teacher.push_back(std::move(gt));
        out.grad_student.push_back(std::move(gs));
    }
    return out;
}

}  // namespace timedistill::spectral
