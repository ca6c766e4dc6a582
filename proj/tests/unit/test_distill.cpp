#include <doctest.h>

#include "oracles.hpp"
#include "timedistill/distill.hpp"
#include "timedistill/error.hpp"
#include "timedistill/gradcheck.hpp"

using namespace timedistill;
using namespace timedistill::distill;

namespace {

DistillConfig small_config() {
    DistillConfig cfg;
    cfg.T = 24;
    cfg.S = 16;
    cfg.D = 8;
    cfg.M = 2;
    return cfg;
}

student::StudentParams small_student(const DistillConfig& cfg, std::size_t C, std::uint64_t seed) {
    return student::init_params({.T = cfg.T, .S = cfg.S, .D = cfg.D, .C = C, .norm = cfg.norm, .kernel = 5,
                                 .seed = seed});
}

struct Fixture {
    DistillConfig cfg = small_config();
    Tensor3 X, Y;
    student::StudentParams params;
    teacher::TeacherOutputs teacher;
    teacher::Regressor regressor;

    explicit Fixture(std::uint64_t seed, std::size_t Dt = 6) {
        std::mt19937_64 rng(seed);
        X = oracle::random_tensor(3, 24, 2, rng);
        Y = oracle::random_tensor(3, 16, 2, rng);
        params = small_student(cfg, 2, seed);
        teacher = {oracle::random_tensor(3, 16, 2, rng), oracle::random_tensor(3, static_cast<Eigen::Index>(Dt), 2, rng)};
        regressor = teacher::init_regressor(cfg.D, Dt, seed + 1);
    }
};

double expected_total(const LossBreakdown& l, const DistillConfig& cfg) {
    const auto w = term_weights(cfg);
    return w.sup * l.sup + w.scale_y * l.scale_y + w.period_y * l.period_y + w.scale_h * l.scale_h +
           w.period_h * l.period_h + w.gt * (l.gt_scale + l.gt_period);
}

}  // namespace

TEST_CASE("sup_loss examples") {
    Matrix y(2, 2);
    y << 1, 2, 3, 4;
    CHECK(sup_loss({Matrix::Zero(2, 2)}, {y}) == doctest::Approx(7.5));
    CHECK(sup_loss({y}, {y}) == 0.0);
    std::mt19937_64 rng(1);
    const auto a = oracle::random_tensor(3, 5, 2, rng), b = oracle::random_tensor(3, 5, 2, rng);
    CHECK(sup_loss(a, b) == sup_loss(b, a));
    CHECK(sup_loss(a, b) == doctest::Approx(oracle::brute_mse(a, b)).epsilon(1e-12));
    CHECK_THROWS_AS(sup_loss(a, oracle::random_tensor(3, 5, 1, rng)), UsageError);
}

TEST_CASE("config validation") {
    auto cfg = small_config();
    CHECK_NOTHROW(cfg.validate());
    cfg.tau = 0.0;
    CHECK_THROWS_AS(cfg.validate(), UsageError);
    cfg = small_config();
    cfg.alpha = -0.1;
    CHECK_THROWS_AS(cfg.validate(), UsageError);
    cfg = small_config();
    cfg.M = 5;
    CHECK_THROWS_AS(cfg.validate(), UsageError);
}

TEST_CASE("reference ECL configuration is accepted") {
    DistillConfig cfg;
    cfg.alpha = 0.1;
    cfg.beta = 0.5;
    cfg.tau = 0.5;
    cfg.M = 3;
    cfg.D = 512;
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.T == 720);
    CHECK(cfg.S == 96);
    CHECK(cfg.norm == student::NormMode::NonStationary);
    const auto w = term_weights(cfg);
    CHECK(w.sup == 1.0);
    CHECK(w.scale_y == 0.1);
    CHECK(w.period_h == 0.5);
}

TEST_CASE("self-distillation identity") {
    Fixture f(2);
    f.cfg.D = 8;
    const auto out = student::forward(f.params, f.X);
    const teacher::TeacherOutputs same{out.y_hat, out.h};
    const teacher::Regressor id{Matrix::Identity(8, 8), Vector::Zero(8)};
    const auto l = total_loss(f.Y, out, same, id, f.cfg);
    CHECK(l.scale_y == 0.0);
    CHECK(l.scale_h == 0.0);
    CHECK(std::abs(l.period_y) < 1e-12);
    CHECK(std::abs(l.period_h) < 1e-12);
    CHECK(l.total == doctest::Approx(l.sup).epsilon(1e-12));
}

TEST_CASE("zero weights reduce total to the supervised loss") {
    Fixture f(3);
    f.cfg.alpha = 0.0;
    f.cfg.beta = 0.0;
    const auto out = student::forward(f.params, f.X);
    const auto l = total_loss(f.Y, out, f.teacher, f.regressor, f.cfg);
    CHECK(l.total == l.sup);
    CHECK(l.sup == doctest::Approx(oracle::brute_mse(out.y_hat, f.Y)).epsilon(1e-12));
}

TEST_CASE("breakdown additivity over random configurations") {
    Fixture f(4);
    const auto out = student::forward(f.params, f.X);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    std::bernoulli_distribution coin(0.5);
    for (int trial = 0; trial < 100; ++trial) {
        auto cfg = f.cfg;
        cfg.alpha = u(rng);
        cfg.beta = u(rng);
        cfg.tau = 0.1 + u(rng);
        cfg.M = static_cast<std::size_t>(trial % 3);
        cfg.use_scale = coin(rng);
        cfg.use_period = coin(rng);
        cfg.use_pred_level = coin(rng);
        cfg.use_feat_level = coin(rng);
        cfg.use_sup = coin(rng);
        cfg.use_gt_pattern = trial % 7 == 0;
        const auto l = total_loss(f.Y, out, f.teacher, f.regressor, cfg);
        CHECK(std::abs(l.total - expected_total(l, cfg)) <= 1e-12 * std::max(1.0, std::abs(l.total)));
        for (const double v : {l.sup, l.scale_y, l.scale_h, l.period_y, l.period_h, l.gt_scale, l.gt_period})
            CHECK(v >= 0.0);
        if (!cfg.use_scale) CHECK(l.scale_y + l.scale_h == 0.0);
        if (!cfg.use_period) CHECK(l.period_y + l.period_h == 0.0);
        if (!cfg.use_pred_level) CHECK(l.scale_y + l.period_y == 0.0);
        if (!cfg.use_feat_level) CHECK(l.scale_h + l.period_h == 0.0);
    }
}

TEST_CASE("total is linear in alpha") {
    Fixture f(6);
    const auto out = student::forward(f.params, f.X);
    auto c1 = f.cfg, c2 = f.cfg;
    c1.alpha = 0.1;
    c2.alpha = 0.7;
    const auto l1 = total_loss(f.Y, out, f.teacher, f.regressor, c1);
    const auto l2 = total_loss(f.Y, out, f.teacher, f.regressor, c2);
    CHECK(l2.total - l1.total == doctest::Approx(0.6 * (l1.scale_y + l1.period_y)).epsilon(1e-10));
    CHECK(l2.scale_y == l1.scale_y);
}

TEST_CASE("misaligned teacher is rejected") {
    Fixture f(7);
    const auto out = student::forward(f.params, f.X);
    auto t = f.teacher;
    t.y_hat.pop_back();
    t.h.pop_back();
    CHECK_THROWS_AS(total_loss(f.Y, out, t, f.regressor, f.cfg), DataError);
    CHECK_THROWS_AS(distill_gradients(f.params, f.regressor, f.X, f.Y, t, f.cfg), DataError);
    auto cfg = f.cfg;
    cfg.alpha = cfg.beta = 0.0;
    CHECK_NOTHROW(total_loss(f.Y, out, t, f.regressor, cfg));
}

TEST_CASE("ground-truth pattern loss") {
    std::mt19937_64 rng(8);
    const auto y = oracle::random_tensor(2, 16, 3, rng);
    const auto cfg = small_config();
    CHECK(std::abs(gt_pattern_loss(y, y, cfg)) < 1e-12);

    const Tensor3 c1{Matrix::Constant(16, 3, 1.5)}, c2{Matrix::Constant(16, 3, -0.5)};
    CHECK(gt_pattern_loss(c2, c1, cfg) == doctest::Approx(4.0).epsilon(1e-12));

    Fixture f(9);
    f.cfg.use_gt_pattern = true;
    f.cfg.use_pred_level = f.cfg.use_feat_level = false;
    const auto out = student::forward(f.params, f.X);
    const auto l = total_loss(f.Y, out, f.teacher, f.regressor, f.cfg);
    CHECK(l.total == doctest::Approx(gt_pattern_loss(out.y_hat, f.Y, f.cfg)).epsilon(1e-12));
    CHECK(l.scale_y + l.scale_h + l.period_y + l.period_h == 0.0);
}

TEST_CASE("gradients of the total loss match finite differences") {
    struct Variant {
        const char* name;
        student::NormMode norm;
        bool gt;
    };
    for (const auto& v : {Variant{"non-stationary", student::NormMode::NonStationary, false},
                          Variant{"revin", student::NormMode::Revin, false},
                          Variant{"gt-pattern", student::NormMode::NonStationary, true}}) {
        CAPTURE(v.name);
        Fixture f(10);
        f.cfg.norm = v.norm;
        f.cfg.use_gt_pattern = v.gt;
        f.params = small_student(f.cfg, 2, 10);
        if (v.norm == student::NormMode::Revin) {
            f.params.revin_gamma << 1.2, 0.8;
            f.params.revin_beta << 0.1, -0.2;
        }
        f.regressor.b.setConstant(0.05);
        const auto g = distill_gradients(f.params, f.regressor, f.X, f.Y, f.teacher, f.cfg);
        auto loss = [&] {
            return total_loss(f.Y, student::forward(f.params, f.X), f.teacher, f.regressor, f.cfg).total;
        };
        CHECK(g.loss.total == doctest::Approx(loss()).epsilon(1e-12));

        auto params = f.params.slots();
        auto analytic = g.student;
        CHECK(trainer::gradient_check(loss, params, analytic.slots(), 1e-5, 200, 1).max_rel_error < 1e-4);

        auto rparams = f.regressor.slots();
        auto ranalytic = g.regressor;
        CHECK(trainer::gradient_check(loss, rparams, ranalytic.slots(), 1e-5, 200, 2).max_rel_error < 1e-4);
    }
}

TEST_CASE("teacher tensors are constants of the objective") {
    Fixture f(11);
    const auto before = f.teacher;
    const auto g = distill_gradients(f.params, f.regressor, f.X, f.Y, f.teacher, f.cfg);
    for (std::size_t i = 0; i < before.size(); ++i) {
        CHECK(f.teacher.y_hat[i] == before.y_hat[i]);
        CHECK(f.teacher.h[i] == before.h[i]);
    }
    auto student_grads = g.student;
    auto regressor_grads = g.regressor;
    for (const auto& s : student_grads.slots()) CHECK(s.name.find("teacher") == std::string::npos);
    CHECK(regressor_grads.slots().size() == 2);

    auto cfg = f.cfg;
    cfg.freeze_regressor = true;
    const auto frozen = distill_gradients(f.params, f.regressor, f.X, f.Y, f.teacher, cfg);
    CHECK(frozen.regressor.W.isZero());
    CHECK(frozen.regressor.b.isZero());
    CHECK(frozen.loss.total == doctest::Approx(g.loss.total));
}
