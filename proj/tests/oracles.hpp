#pragma once

// Independent reference computations used only by tests.

#include "timedistill/types.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

using timedistill::Matrix;
using timedistill::Tensor3;

/// O(L²) DFT with exact integer reduction of the phase index.
inline std::vector<std::complex<double>> naive_dft(const std::vector<double>& x) {
    const std::size_t L = x.size();
    std::vector<std::complex<double>> out(L);
    for (std::size_t k = 0; k < L; ++k) {
        std::complex<double> acc{};
        for (std::size_t n = 0; n < L; ++n) {
            const std::size_t idx = (k * n) % L;
            const double ang = -2.0 * std::numbers::pi * static_cast<double>(idx) / static_cast<double>(L);
            acc += x[n] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[k] = acc;
    }
    return out;
}

/// Amplitudes of bins 1..⌊L/2⌋ of one column.
inline std::vector<double> naive_amplitude(const std::vector<double>& x) {
    const auto X = naive_dft(x);
    std::vector<double> amp;
    for (std::size_t k = 1; k <= x.size() / 2; ++k) amp.push_back(std::abs(X[k]));
    return amp;
}

inline double brute_mse(const Tensor3& a, const Tensor3& b) {
    double total = 0.0;
    for (std::size_t n = 0; n < a.size(); ++n) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < a[n].rows(); ++i)
            for (Eigen::Index j = 0; j < a[n].cols(); ++j) s += (a[n](i, j) - b[n](i, j)) * (a[n](i, j) - b[n](i, j));
        total += s / static_cast<double>(a[n].rows() * a[n].cols());
    }
    return total / static_cast<double>(a.size());
}

inline double brute_mae(const Tensor3& a, const Tensor3& b) {
    double total = 0.0;
    for (std::size_t n = 0; n < a.size(); ++n) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < a[n].rows(); ++i)
            for (Eigen::Index j = 0; j < a[n].cols(); ++j) s += std::abs(a[n](i, j) - b[n](i, j));
        total += s / static_cast<double>(a[n].rows() * a[n].cols());
    }
    return total / static_cast<double>(a.size());
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

inline Tensor3 random_tensor(std::size_t B, Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                             double scale = 1.0) {
    Tensor3 t;
    for (std::size_t b = 0; b < B; ++b) t.push_back(random_matrix(rows, cols, rng, scale));
    return t;
}

/// Central finite differences of f over every entry of x.
template <class F>
Matrix finite_diff(F&& f, Matrix x, double h = 1e-6) {
    Matrix g(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double s = x.data()[i];
        x.data()[i] = s + h;
        const double up = f(x);
        x.data()[i] = s - h;
        const double down = f(x);
        x.data()[i] = s;
        g.data()[i] = (up - down) / (2.0 * h);
    }
    return g;
}

inline double max_rel_error(const Matrix& a, const Matrix& n) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double e = std::abs(a.data()[i] - n.data()[i]) / (std::abs(a.data()[i]) + std::abs(n.data()[i]) + 1e-12);
        worst = std::max(worst, e);
    }
    return worst;
}

/// Softmax of a real vector.
inline std::vector<double> softmax(const std::vector<double>& a, double tau) {
    double top = a[0];
    for (double v : a) top = std::max(top, v);
    std::vector<double> q(a.size());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (q[i] = std::exp((a[i] - top) / tau));
    for (auto& v : q) v /= s;
    return q;
}

}  // namespace oracle
