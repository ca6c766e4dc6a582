#pragma once

#include "timedistill/types.hpp"

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace timedistill::spectral {

using Complex = std::complex<double>;

/// Precomputed transform of one length. Radix-2 for powers of two, chirp-z
/// (Bluestein) over a radix-2 core otherwise. Immutable once built.
class FftPlan {
public:
    explicit FftPlan(std::size_t n);

    std::size_t size() const { return n_; }

    /// X_k = Σ_n x_n e^{-2πi kn/N}
    std::vector<Complex> forward(std::span<const Complex> x) const;

private:
    std::size_t n_;
    std::size_t core_;                 // radix-2 length used internally
    std::vector<Complex> twiddles_;    // e^{-2πi j/core}, j < core/2
    std::vector<Complex> chirp_;       // e^{-πi k²/n}, empty for powers of two
    std::vector<Complex> chirp_filter_;  // FFT of the conjugate chirp, length core

    void radix2(std::vector<Complex>& a, bool inverse) const;
};

/// Shared plan for length n; plans are created once and cached process-wide.
const FftPlan& plan_for(std::size_t n);

std::vector<Complex> fft(std::span<const Complex> x);
std::vector<Complex> fft_real(std::span<const double> x);

/// DC-removed amplitude spectrum; row k-1 holds bin k for k = 1..⌊L/2⌋.
struct Spectrogram {
    Matrix amp;
    std::size_t source_length = 0;

    /// Period in time steps of the 1-based bin k: ⌈L/k⌉.
    std::size_t period_of_bin(std::size_t k) const { return (source_length + k - 1) / k; }
};

Spectrogram dft_amplitude(const Matrix& x);

/// Column-wise temperature softmax over amplitude bins.
struct PeriodDistribution {
    Matrix q;
    double temperature = 0.5;
};

PeriodDistribution period_distribution(const Spectrogram& sp, double tau);

inline constexpr double kLogFloor = 1e-12;
inline constexpr double kAmplitudeFloor = 1e-12;

/// Mean over channels of Σ_k q_t[k] (ln q_t[k] - ln max(q_s[k], 1e-12)).
double kl_div(const PeriodDistribution& teacher, const PeriodDistribution& student);

struct PeriodLossGrad {
    double loss = 0.0;
    Matrix grad;
};

/// Loss and analytic gradient of kl_div(q_t, softmax(|DFT(y_s)|/τ)) with respect to y_s.
PeriodLossGrad period_loss_grad(const Matrix& y_s, const PeriodDistribution& q_t, double tau);

struct BatchPeriodLossGrad {
    double loss = 0.0;
    Tensor3 grad_teacher;
    Tensor3 grad_student;
};

/// Batched period loss between signals; averaged over samples (and channels within kl_div).
double batch_period_loss(const Tensor3& teacher, const Tensor3& student, double tau);
BatchPeriodLossGrad batch_period_loss_grad(const Tensor3& teacher, const Tensor3& student, double tau);

}  // namespace timedistill::spectral
