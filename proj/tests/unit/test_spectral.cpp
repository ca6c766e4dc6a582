#include <doctest.h>

#include "oracles.hpp"
#include "timedistill/error.hpp"
#include "timedistill/spectral.hpp"

#include <cmath>
#include <numbers>

using namespace timedistill;
using namespace timedistill::spectral;

namespace {

Matrix column(std::initializer_list<double> v) {
    Matrix m(static_cast<Eigen::Index>(v.size()), 1);
    Eigen::Index i = 0;
    for (double x : v) m(i++, 0) = x;
    return m;
}

double entropy(const Vector& q) { return -(q.array() * q.array().log()).sum(); }

}  // namespace

TEST_CASE("dft_amplitude hand examples") {
    const auto c = dft_amplitude(column({3, 3, 3, 3}));
    CHECK(c.amp.rows() == 2);
    CHECK(c.amp.cwiseAbs().maxCoeff() < 1e-12);

    const auto s = dft_amplitude(column({0, 1, 0, -1}));
    CHECK(s.amp(0, 0) == doctest::Approx(2.0));
    CHECK(std::abs(s.amp(1, 0)) < 1e-12);

    Matrix x(8, 1);
    for (int n = 0; n < 8; ++n) x(n, 0) = std::cos(2.0 * std::numbers::pi * 2.0 * n / 8.0);
    const auto a = dft_amplitude(x);
    REQUIRE(a.amp.rows() == 4);
    CHECK(std::abs(a.amp(0, 0)) < 1e-12);
    CHECK(a.amp(1, 0) == doctest::Approx(4.0));
    CHECK(std::abs(a.amp(2, 0)) < 1e-12);
    CHECK(std::abs(a.amp(3, 0)) < 1e-12);

    CHECK_THROWS_AS(dft_amplitude(column({1})), UsageError);
}

TEST_CASE("bin periods follow ceil(L/k)") {
    const auto sp = dft_amplitude(Matrix::Zero(96, 1));
    CHECK(sp.period_of_bin(1) == 96);
    CHECK(sp.period_of_bin(5) == 20);
    CHECK(sp.period_of_bin(7) == 14);
    CHECK(sp.period_of_bin(48) == 2);
}

TEST_CASE("transform agrees with the naive DFT for arbitrary lengths") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n(0.0, 1.0);
    for (const std::size_t L : {1u, 2u, 3u, 4u, 5u, 7u, 8u, 12u, 96u, 97u, 192u, 336u, 720u}) {
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<double> x(L);
            for (auto& v : x) v = n(rng);
            const auto ref = oracle::naive_dft(x);
            const auto got = fft_real(x);
            double scale = 0.0, err = 0.0;
            for (std::size_t k = 0; k < L; ++k) {
                scale = std::max(scale, std::abs(ref[k]));
                err = std::max(err, std::abs(ref[k] - got[k]));
            }
            CHECK(err <= 1e-9 * scale);
        }
    }
}

TEST_CASE("Parseval identity holds for the full transform") {
    std::mt19937_64 rng(8);
    for (const std::size_t L : {2u, 3u, 5u, 96u, 336u, 720u}) {
        const Matrix x = oracle::random_matrix(static_cast<Eigen::Index>(L), 1, rng);
        const auto X = fft_real(std::span<const double>(x.data(), L));
        double spec = 0.0;
        for (const auto& z : X) spec += std::norm(z);
        const double time = static_cast<double>(L) * x.squaredNorm();
        CHECK(std::abs(spec - time) <= 1e-9 * time);
    }
}

TEST_CASE("period_distribution examples") {
    const auto u = period_distribution(dft_amplitude(Matrix::Zero(96, 2)), 0.5);
    CHECK((u.q.array() - 1.0 / 48.0).abs().maxCoeff() < 1e-15);

    Spectrogram sp{Matrix::Zero(48, 1), 96};
    sp.amp(5, 0) = 1.0;
    const auto q = period_distribution(sp, 0.5);
    const double e2 = std::exp(2.0);
    CHECK(q.q(5, 0) == doctest::Approx(e2 / (e2 + 47.0)).epsilon(1e-12));
    CHECK(q.q(0, 0) == doctest::Approx(1.0 / (e2 + 47.0)).epsilon(1e-12));

    CHECK_THROWS_AS(period_distribution(sp, 0.0), UsageError);
    CHECK_THROWS_AS(period_distribution(sp, -1.0), UsageError);
}

TEST_CASE("period distributions normalize, shift-invariant, soften with temperature") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const auto sp = dft_amplitude(oracle::random_matrix(96, 3, rng));
        const auto q = period_distribution(sp, 0.5);
        for (Eigen::Index c = 0; c < 3; ++c) CHECK(std::abs(q.q.col(c).sum() - 1.0) < 1e-9);
        CHECK((q.q.array() > 0.0).all());

        Spectrogram shifted = sp;
        shifted.amp.array() += 3.7;
        CHECK((period_distribution(shifted, 0.5).q - q.q).cwiseAbs().maxCoeff() < 1e-12);

        double prev = -1.0;
        for (const double tau : {0.5, 1.0, 2.0, 4.0}) {
            const double h = entropy(period_distribution(sp, tau).q.col(0));
            CHECK(h >= prev - 1e-12);
            prev = h;
        }
    }
}

TEST_CASE("kl_div examples and properties") {
    std::mt19937_64 rng(10);
    const auto p = period_distribution(dft_amplitude(oracle::random_matrix(32, 2, rng)), 0.5);
    CHECK(kl_div(p, p) == doctest::Approx(0.0));

    PeriodDistribution onehot{Matrix(2, 1), 0.5};
    onehot.q << 1.0, 0.0;
    PeriodDistribution half{Matrix::Constant(2, 1, 0.5), 0.5};
    CHECK(kl_div(onehot, half) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    std::normal_distribution<double> n(0.0, 1.5);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t bins = 2 + static_cast<std::size_t>(trial % 40);
        std::vector<double> a(bins), b(bins);
        for (auto& v : a) v = n(rng);
        for (auto& v : b) v = n(rng);
        const auto qa = oracle::softmax(a, 1.0), qb = oracle::softmax(b, 1.0);
        PeriodDistribution pa{Eigen::Map<const Matrix>(qa.data(), static_cast<Eigen::Index>(bins), 1), 1.0};
        PeriodDistribution pb{Eigen::Map<const Matrix>(qb.data(), static_cast<Eigen::Index>(bins), 1), 1.0};
        CHECK(kl_div(pa, pb) >= 0.0);
    }

    PeriodDistribution x{Matrix(3, 1), 1.0}, y{Matrix(3, 1), 1.0};
    x.q << 0.7, 0.2, 0.1;
    y.q << 0.2, 0.3, 0.5;
    CHECK(kl_div(x, y) != doctest::Approx(kl_div(y, x)));

    PeriodDistribution wrong{Matrix::Constant(4, 1, 0.25), 1.0};
    CHECK_THROWS_AS(kl_div(x, wrong), UsageError);
}

TEST_CASE("period_loss_grad matches finite differences") {
    std::mt19937_64 rng(11);
    const double tau = 0.5;
    for (int trial = 0; trial < 3; ++trial) {
        const Matrix ys = oracle::random_matrix(32, 2, rng, 0.3);
        const auto qt = period_distribution(dft_amplitude(oracle::random_matrix(32, 2, rng, 0.3)), tau);
        const auto g = period_loss_grad(ys, qt, tau);
        auto f = [&](const Matrix& x) { return kl_div(qt, period_distribution(dft_amplitude(x), tau)); };
        CHECK(g.loss == doctest::Approx(f(ys)).epsilon(1e-12));
        const Matrix num = oracle::finite_diff(f, ys);
        CHECK(oracle::max_rel_error(g.grad, num) < 1e-4);
    }
}

TEST_CASE("period loss is stationary when distributions match") {
    std::mt19937_64 rng(12);
    const Matrix ys = oracle::random_matrix(24, 2, rng);
    const auto qt = period_distribution(dft_amplitude(ys), 0.5);
    const auto g = period_loss_grad(ys, qt, 0.5);
    CHECK(std::abs(g.loss) < 1e-12);
    CHECK(g.grad.norm() < 1e-9);
}

TEST_CASE("zero signal uses the zero-amplitude subgradient") {
    std::mt19937_64 rng(13);
    const auto qt = period_distribution(dft_amplitude(oracle::random_matrix(16, 1, rng)), 0.5);
    const auto g = period_loss_grad(Matrix::Zero(16, 1), qt, 0.5);
    const PeriodDistribution uniform{Matrix::Constant(8, 1, 1.0 / 8.0), 0.5};
    CHECK(g.loss == doctest::Approx(kl_div(qt, uniform)).epsilon(1e-12));
    CHECK(g.grad.allFinite());
    CHECK(g.grad.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("batched period loss gradients on both sides") {
    std::mt19937_64 rng(14);
    const double tau = 0.5;
    const Tensor3 t = oracle::random_tensor(2, 10, 2, rng, 0.5);
    const Tensor3 s = oracle::random_tensor(2, 10, 2, rng, 0.5);
    const auto g = batch_period_loss_grad(t, s, tau);
    CHECK(g.loss == doctest::Approx(batch_period_loss(t, s, tau)).epsilon(1e-12));
    for (std::size_t b = 0; b < 2; ++b) {
        auto fs = [&](const Matrix& x) {
            Tensor3 ss = s;
            ss[b] = x;
            return batch_period_loss(t, ss, tau);
        };
        auto ft = [&](const Matrix& x) {
            Tensor3 tt = t;
            tt[b] = x;
            return batch_period_loss(tt, s, tau);
        };
        CHECK(oracle::max_rel_error(g.grad_student[b], oracle::finite_diff(fs, s[b])) < 1e-4);
        CHECK(oracle::max_rel_error(g.grad_teacher[b], oracle::finite_diff(ft, t[b])) < 1e-4);
    }
}
