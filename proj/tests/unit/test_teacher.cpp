#include <doctest.h>

#include "oracles.hpp"
#include "timedistill/dataio.hpp"
#include "timedistill/error.hpp"
#include "timedistill/gradcheck.hpp"
#include "timedistill/multiscale.hpp"
#include "timedistill/spectral.hpp"
#include "timedistill/teacher.hpp"

#include <filesystem>
#include <fstream>

using namespace timedistill;
using namespace timedistill::teacher;

namespace {

std::filesystem::path temp_file(const char* name) { return std::filesystem::temp_directory_path() / name; }

std::string read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    out << bytes;
}

TeacherOutputs random_outputs(std::size_t N, Eigen::Index S, Eigen::Index C, Eigen::Index Dt, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return {oracle::random_tensor(N, S, C, rng), oracle::random_tensor(N, Dt, C, rng)};
}

}  // namespace

TEST_CASE("artifact indexing and round trip") {
    const TeacherMeta meta{"test", 192, 96, 7, 64, 100};
    const auto out = random_outputs(100, 96, 7, 64, 1);
    const auto path = temp_file("td_teacher.tdt");
    write_teacher_artifact(path, meta, out);

    const auto art = load_teacher_artifact(path);
    CHECK(art.meta().N == 100);
    CHECK(art.meta().D_t == 64);
    const auto [y, h] = art.query(99);
    CHECK(y.rows() == 96);
    CHECK(y.cols() == 7);
    CHECK(h.rows() == 64);
    CHECK(h.cols() == 7);
    CHECK_THROWS_AS(art.query(100), UsageError);

    for (std::size_t n = 0; n < 100; ++n) {
        CHECK(art.outputs().y_hat[n] == out.y_hat[n].cast<float>().cast<double>());
        CHECK(art.outputs().h[n] == out.h[n].cast<float>().cast<double>());
    }

    const std::string bytes = read_bytes(path);
    CHECK(bytes.substr(0, 8) == "TDTEACH1");
    std::filesystem::remove(path);
}

TEST_CASE("artifact corruption is rejected") {
    const TeacherMeta meta{"val", 24, 8, 2, 4, 5};
    const auto path = temp_file("td_teacher_c.tdt");
    write_teacher_artifact(path, meta, random_outputs(5, 8, 2, 4, 2));
    const std::string bytes = read_bytes(path);
    const auto bad = temp_file("td_teacher_bad.tdt");

    write_bytes(bad, bytes.substr(0, bytes.size() - 12));
    const std::size_t expected = 4 * (5 * 8 * 2 + 5 * 4 * 2);
    try {
        (void)load_teacher_artifact(bad);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("expected " + std::to_string(expected) + " bytes") != std::string::npos);
        CHECK(msg.find("got " + std::to_string(expected - 12)) != std::string::npos);
    }

    std::string magic = bytes;
    magic[3] = 'Z';
    write_bytes(bad, magic);
    CHECK_THROWS_AS(load_teacher_artifact(bad), DataError);

    std::string dtype = bytes;
    dtype.replace(dtype.find("\"f32\""), 5, "\"f64\"");
    write_bytes(bad, dtype);
    CHECK_THROWS_WITH_AS(load_teacher_artifact(bad), doctest::Contains("dtype"), DataError);

    std::string checksum = bytes;
    checksum.replace(checksum.find("\"val\""), 5, "\"vbl\"");
    write_bytes(bad, checksum);
    CHECK_THROWS_WITH_AS(load_teacher_artifact(bad), doctest::Contains("checksum"), DataError);

    write_bytes(bad, bytes + "xxxx");
    CHECK_THROWS_AS(load_teacher_artifact(bad), DataError);
    std::filesystem::remove(path);
    std::filesystem::remove(bad);
}

TEST_CASE("alignment checksum is FNV-1a of the window key") {
    const TeacherMeta meta{"train", 720, 96, 7, 64, 8545};
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char ch : std::string("train:720:96:8545")) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    CHECK(alignment_checksum(meta) == buf);
}

TEST_CASE("artifact alignment against window sets") {
    auto ds = dataio::standardize(dataio::split_standard(
        dataio::synth_multiperiod({.length = 400, .channels = 2, .periods = {24}, .seed = 1}), {0.7, 0.1, 0.2}));
    const dataio::WindowSet w(ds, dataio::Split::Val, 16, 8);
    const TeacherMeta good{"val", 16, 8, 2, 4, w.size()};
    const TeacherArtifact art(good, random_outputs(w.size(), 8, 2, 4, 3));
    CHECK_NOTHROW(art.check_alignment(w));

    TeacherMeta wrong_split = good;
    wrong_split.split_id = "test";
    CHECK_THROWS_AS(TeacherArtifact(wrong_split, art.outputs()).check_alignment(w), DataError);
    TeacherMeta wrong_T = good;
    wrong_T.T = 17;
    CHECK_THROWS_AS(TeacherArtifact(wrong_T, art.outputs()).check_alignment(w), DataError);
    TeacherMeta wrong_N = good;
    wrong_N.N = w.size() - 1;
    auto fewer = art.outputs();
    fewer.y_hat.pop_back();
    fewer.h.pop_back();
    CHECK_THROWS_AS(TeacherArtifact(wrong_N, fewer).check_alignment(w), DataError);
}

TEST_CASE("oracle noise teacher") {
    std::mt19937_64 rng(4);
    const auto Y = oracle::random_tensor(200, 96, 7, rng);  // 134,400 draws

    const auto exact = oracle_noise_teacher(Y, 0.0, 16, 5);
    for (std::size_t n = 0; n < Y.size(); ++n) CHECK(exact.y_hat[n] == Y[n]);

    const auto noisy = oracle_noise_teacher(Y, 0.1, 16, 5);
    double sq = 0.0;
    std::size_t count = 0;
    for (std::size_t n = 0; n < Y.size(); ++n) {
        sq += (noisy.y_hat[n] - Y[n]).squaredNorm();
        count += static_cast<std::size_t>(Y[n].size());
    }
    CHECK(count >= 100000);
    CHECK(std::abs(sq / static_cast<double>(count) - 0.01) < 0.002);

    const auto again = oracle_noise_teacher(Y, 0.1, 16, 5);
    for (std::size_t n = 0; n < Y.size(); ++n) {
        CHECK(again.y_hat[n] == noisy.y_hat[n]);
        CHECK(again.h[n] == noisy.h[n]);
    }
    CHECK(noisy.h[0].rows() == 16);
    CHECK(noisy.h[0].cols() == 7);

    // features are one fixed linear projection of the prediction
    const Tensor3 pair{Y[0], 2.0 * Y[0]};
    const auto lin = oracle_noise_teacher(pair, 0.0, 16, 9);
    CHECK((lin.h[1] - 2.0 * lin.h[0]).cwiseAbs().maxCoeff() < 1e-12);

    CHECK_THROWS_AS(oracle_noise_teacher(Y, -0.1, 16, 5), UsageError);
}

TEST_CASE("linear teacher recovers the copy map") {
    std::mt19937_64 rng(6);
    auto make = [&](std::size_t n) {
        Tensor3 X = oracle::random_tensor(n, 32, 1, rng);
        Tensor3 Y;
        for (const auto& x : X) Y.push_back(Matrix::Constant(8, 1, x(31, 0)));
        return std::pair{X, Y};
    };
    const auto [Xtr, Ytr] = make(300);
    const auto [Xte, Yte] = make(100);
    const auto t = train_linear_teacher(Xtr, Ytr, 1e-6, 8, 1);
    CHECK(t.A.rows() == 8);
    CHECK(t.A.cols() == 32);
    const auto pred = t.predict(Xte);
    CHECK(oracle::brute_mse(pred.y_hat, Yte) < 1e-6);
    CHECK(pred.h[0].rows() == 8);

    const auto again = train_linear_teacher(Xtr, Ytr, 1e-6, 8, 1);
    CHECK(again.A == t.A);
    CHECK(again.projection == t.projection);

    const auto shrunk = train_linear_teacher(Xtr, Ytr, 1e12, 8, 1);
    CHECK(shrunk.A.cwiseAbs().maxCoeff() < 1e-8);
    for (const auto& y : shrunk.predict(Xte).y_hat) CHECK(y.cwiseAbs().maxCoeff() < 1e-6);

    CHECK_THROWS_AS(train_linear_teacher(Xtr, Ytr, 0.0, 8, 1), UsageError);
    CHECK_THROWS_AS(train_linear_teacher(Xtr, Ytr, -1.0, 8, 1), UsageError);
}

TEST_CASE("regressor identity and zero maps") {
    std::mt19937_64 rng(7);
    const auto h = oracle::random_tensor(3, 5, 2, rng);
    const Regressor id{Matrix::Identity(5, 5), Vector::Zero(5)};
    const auto out = regressor_apply(id, h);
    for (std::size_t i = 0; i < 3; ++i) CHECK(out[i] == h[i]);

    const Regressor zero{Matrix::Zero(6, 5), Vector::Zero(6)};
    for (const auto& z : regressor_apply(zero, h)) {
        CHECK(z.rows() == 6);
        CHECK(z.isZero());
    }
    CHECK_THROWS_AS(regressor_apply(zero, oracle::random_tensor(1, 4, 2, rng)), UsageError);

    const auto r = init_regressor(6, 5, 3);
    CHECK(r.W.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(5.0));
    CHECK(r.b.isZero());
}

TEST_CASE("regressor gradient of the feature losses matches finite differences") {
    std::mt19937_64 rng(8);
    const std::size_t M = 2;
    const double tau = 0.5;
    const auto h_t = oracle::random_tensor(3, 5, 2, rng);
    const auto h_s = oracle::random_tensor(3, 8, 2, rng);
    auto r = init_regressor(8, 5, 9);
    r.b = oracle::random_matrix(8, 1, rng, 0.1);

    auto loss = [&] {
        const auto ht = regressor_apply(r, h_t);
        return multiscale::batch_scale_loss(ht, h_s, M) + spectral::batch_period_loss(ht, h_s, tau);
    };
    const auto ht = regressor_apply(r, h_t);
    const auto gs = multiscale::batch_scale_loss_grad(ht, h_s, M);
    const auto gp = spectral::batch_period_loss_grad(ht, h_s, tau);
    Tensor3 adj;
    for (std::size_t i = 0; i < 3; ++i) adj.push_back(gs.grad_teacher[i] + gp.grad_teacher[i]);
    auto grads = regressor_backward(r, h_t, adj);
    auto params = r.slots();
    const auto report = trainer::gradient_check(loss, params, grads.slots(), 1e-5, 200, 1);
    CHECK(report.max_rel_error < 1e-4);
}
