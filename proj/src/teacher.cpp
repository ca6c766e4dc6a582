#include "timedistill/teacher.hpp"

#include "binio.hpp"
#include "timedistill/error.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

namespace timedistill::teacher {

TeacherOutputs TeacherOutputs::gather(std::span<const std::size_t> indices) const {
    TeacherOutputs out;
    out.y_hat.reserve(indices.size());
    out.h.reserve(indices.size());
    for (const auto i : indices) {
        if (i >= y_hat.size()) throw UsageError("teacher index " + std::to_string(i) + " out of range");
        out.y_hat.push_back(y_hat[i]);
        out.h.push_back(h[i]);
    }
    return out;
}

std::string alignment_checksum(const TeacherMeta& m) {
    std::ostringstream key;
    key << m.split_id << ':' << m.T << ':' << m.S << ':' << m.N;
    std::uint64_t hash = 14695981039346656037ULL;
    for (const unsigned char ch : key.str()) {
        hash ^= ch;
        hash *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

TeacherArtifact::TeacherArtifact(TeacherMeta meta, TeacherOutputs outputs)
    : meta_(std::move(meta)), outputs_(std::move(outputs)) {
    if (outputs_.y_hat.size() != meta_.N || outputs_.h.size() != meta_.N)
        throw DataError("teacher outputs do not match declared N");
}

std::pair<const Matrix&, const Matrix&> TeacherArtifact::query(std::size_t index) const {
    if (index >= meta_.N) {
        throw UsageError("teacher query index " + std::to_string(index) + " outside declared range [0, " +
                         std::to_string(meta_.N) + ")");
    }
    return {outputs_.y_hat[index], outputs_.h[index]};
}

TeacherOutputs TeacherArtifact::gather(std::span<const std::size_t> indices) const {
    for (const auto i : indices) (void)query(i);
    return outputs_.gather(indices);
}

void TeacherArtifact::check_alignment(const dataio::WindowSet& w) const {
    const std::string split = dataio::split_name(w.split());
    if (meta_.split_id != split || meta_.T != w.lookback() || meta_.S != w.horizon() || meta_.N != w.size() ||
        meta_.C != w.channels()) {
        std::ostringstream msg;
        msg << "teacher artifact (split=" << meta_.split_id << ", T=" << meta_.T << ", S=" << meta_.S
            << ", C=" << meta_.C << ", N=" << meta_.N << ") is not aligned with windows (split=" << split
            << ", T=" << w.lookback() << ", S=" << w.horizon() << ", C=" << w.channels() << ", N=" << w.size()
            << ")";
        throw DataError(msg.str());
    }
}

namespace {
constexpr std::string_view kArtifactMagic = "TDTEACH1";
}

void write_teacher_artifact(const std::filesystem::path& path, const TeacherMeta& meta, const TeacherOutputs& out) {
    if (out.y_hat.size() != meta.N || out.h.size() != meta.N) throw UsageError("teacher outputs do not match N");
    for (std::size_t n = 0; n < meta.N; ++n) {
        if (out.y_hat[n].rows() != static_cast<Eigen::Index>(meta.S) ||
            out.y_hat[n].cols() != static_cast<Eigen::Index>(meta.C) ||
            out.h[n].rows() != static_cast<Eigen::Index>(meta.D_t) || out.h[n].cols() != static_cast<Eigen::Index>(meta.C))
            throw UsageError("teacher output shape does not match metadata");
    }
    nlohmann::ordered_json header = {{"version", 1},     {"split_id", meta.split_id}, {"T", meta.T},
                                     {"S", meta.S},      {"C", meta.C},               {"D_t", meta.D_t},
                                     {"N", meta.N},      {"dtype", "f32"},            {"layout", "sample-major"},
                                     {"checksum", alignment_checksum(meta)}};
    const std::string text = header.dump();
    binio::Writer w;
    w.bytes(kArtifactMagic);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
    w.bytes(text);
    for (const auto& y : out.y_hat)
        for (Eigen::Index s = 0; s < y.rows(); ++s)
            for (Eigen::Index c = 0; c < y.cols(); ++c) w.put<float>(static_cast<float>(y(s, c)));
    for (const auto& h : out.h)
        for (Eigen::Index d = 0; d < h.rows(); ++d)
            for (Eigen::Index c = 0; c < h.cols(); ++c) w.put<float>(static_cast<float>(h(d, c)));
    w.save(path);
}

TeacherArtifact load_teacher_artifact(const std::filesystem::path& path) {
    auto r = binio::Reader::open(path);
    const std::string src = path.string();
    if (r.size() < kArtifactMagic.size() || r.take(kArtifactMagic.size(), "magic") != kArtifactMagic)
        throw DataError(src + ": not a teacher artifact (bad magic)");
    const auto header_len = r.get<std::uint32_t>("header length");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(r.take(header_len, "header"));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(src + ": malformed artifact header: " + e.what());
    }
    TeacherMeta meta;
    std::string checksum;
    try {
        if (header.at("version").get<int>() != 1) throw DataError(src + ": unsupported artifact version");
        if (header.at("dtype").get<std::string>() != "f32")
            throw DataError(src + ": unsupported dtype '" + header.at("dtype").get<std::string>() + "', expected f32");
        if (header.at("layout").get<std::string>() != "sample-major") throw DataError(src + ": unsupported layout");
        meta.split_id = header.at("split_id").get<std::string>();
        meta.T = header.at("T").get<std::size_t>();
        meta.S = header.at("S").get<std::size_t>();
        meta.C = header.at("C").get<std::size_t>();
        meta.D_t = header.at("D_t").get<std::size_t>();
        meta.N = header.at("N").get<std::size_t>();
        checksum = header.at("checksum").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(src + ": incomplete artifact header: " + e.what());
    }
    if (checksum != alignment_checksum(meta)) throw DataError(src + ": alignment checksum mismatch");
    if (meta.S == 0 || meta.C == 0 || meta.D_t == 0) throw DataError(src + ": artifact dimensions must be positive");

    const long double expected_ld =
        4.0L * (static_cast<long double>(meta.N) * meta.S * meta.C + static_cast<long double>(meta.N) * meta.D_t * meta.C);
    const std::size_t expected = 4 * (meta.N * meta.S * meta.C + meta.N * meta.D_t * meta.C);
    if (static_cast<long double>(expected) != expected_ld || r.remaining() != expected) {
        std::ostringstream msg;
        msg << src << ": payload size mismatch: expected " << expected << " bytes, got " << r.remaining();
        throw DataError(msg.str());
    }
    TeacherOutputs out;
    const auto S = static_cast<Eigen::Index>(meta.S), C = static_cast<Eigen::Index>(meta.C),
               Dt = static_cast<Eigen::Index>(meta.D_t);
    out.y_hat.assign(meta.N, Matrix(S, C));
    out.h.assign(meta.N, Matrix(Dt, C));
    for (auto& y : out.y_hat)
        for (Eigen::Index s = 0; s < S; ++s)
            for (Eigen::Index c = 0; c < C; ++c) y(s, c) = r.get<float>("predictions");
    for (auto& h : out.h)
        for (Eigen::Index d = 0; d < Dt; ++d)
            for (Eigen::Index c = 0; c < C; ++c) h(d, c) = r.get<float>("features");
    if (!all_finite(out.y_hat) || !all_finite(out.h)) throw DataError(src + ": artifact contains non-finite values");
    return TeacherArtifact(std::move(meta), std::move(out));
}

TeacherOutputs oracle_noise_teacher(const Tensor3& Y, double sigma, std::size_t D_t, std::uint64_t seed) {
    if (!(sigma >= 0.0)) throw UsageError("oracle teacher sigma must be non-negative");
    if (D_t == 0) throw UsageError("teacher feature width must be positive");
    if (Y.empty()) return {};
    const Eigen::Index S = Y.front().rows();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix P(static_cast<Eigen::Index>(D_t), S);
    for (Eigen::Index i = 0; i < P.size(); ++i) P.data()[i] = normal(rng) / std::sqrt(static_cast<double>(S));

    TeacherOutputs out;
    out.y_hat.reserve(Y.size());
    out.h.reserve(Y.size());
    for (const auto& y : Y) {
        Matrix noisy = y;
        if (sigma > 0.0)
            for (Eigen::Index i = 0; i < noisy.size(); ++i) noisy.data()[i] += sigma * normal(rng);
        out.h.push_back(P * noisy);
        out.y_hat.push_back(std::move(noisy));
    }
    return out;
}

TeacherOutputs LinearTeacher::predict(const Tensor3& X) const {
    TeacherOutputs out;
    const Eigen::Index Dt = projection.rows();
    for (const auto& x : X) {
        if (x.rows() != A.cols()) throw UsageError("linear teacher: lookback length mismatch");
        out.y_hat.push_back(A * x);
        out.h.push_back(projection * x.bottomRows(Dt));
    }
    return out;
}

LinearTeacher train_linear_teacher(const Tensor3& X, const Tensor3& Y, double ridge, std::size_t D_t,
                                   std::uint64_t seed) {
    if (!(ridge > 0.0)) throw UsageError("ridge penalty must be positive");
    if (X.empty() || X.size() != Y.size()) throw UsageError("linear teacher needs matching, nonempty windows");
    const Eigen::Index T = X.front().rows();
    const Eigen::Index S = Y.front().rows();
    if (D_t == 0 || static_cast<Eigen::Index>(D_t) > T) throw UsageError("teacher feature width must be in [1, T]");

    Matrix gram = Matrix::Zero(T, T);
    Matrix cross = Matrix::Zero(S, T);
    for (std::size_t b = 0; b < X.size(); ++b) {
        gram.noalias() += X[b] * X[b].transpose();
        cross.noalias() += Y[b] * X[b].transpose();
    }
    gram.diagonal().array() += ridge;
    Eigen::LLT<Matrix> llt(gram);
    if (llt.info() != Eigen::Success) throw ContractViolation("ridge normal matrix is not positive definite");

    LinearTeacher t;
    t.A = llt.solve(cross.transpose()).transpose();

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto Dt = static_cast<Eigen::Index>(D_t);
    t.projection.resize(Dt, Dt);
    for (Eigen::Index i = 0; i < t.projection.size(); ++i)
        t.projection.data()[i] = normal(rng) / std::sqrt(static_cast<double>(Dt));
    return t;
}

ParamList Regressor::slots() { return {make_slot("regressor_W", W), make_slot("regressor_b", b)}; }

Regressor Regressor::zeros_like() const {
    return Regressor{Matrix::Zero(W.rows(), W.cols()), Vector::Zero(b.size())};
}

Regressor init_regressor(std::size_t D, std::size_t D_t, std::uint64_t seed) {
    if (D == 0 || D_t == 0) throw UsageError("regressor dimensions must be positive");
    std::mt19937_64 rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(D_t));
    std::uniform_real_distribution<double> u(-bound, bound);
    Regressor r{Matrix(static_cast<Eigen::Index>(D), static_cast<Eigen::Index>(D_t)),
                Vector::Zero(static_cast<Eigen::Index>(D))};
    for (Eigen::Index i = 0; i < r.W.size(); ++i) r.W.data()[i] = u(rng);
    return r;
}

Tensor3 regressor_apply(const Regressor& r, const Tensor3& h_t) {
    Tensor3 out;
    out.reserve(h_t.size());
    for (const auto& h : h_t) {
        if (h.rows() != r.W.cols()) throw UsageError("regressor: feature width mismatch");
        out.push_back((r.W * h).colwise() + r.b);
    }
    return out;
}

Regressor regressor_backward(const Regressor& r, const Tensor3& h_t, const Tensor3& grad_out) {
    if (h_t.size() != grad_out.size()) throw UsageError("regressor_backward: batch mismatch");
    Regressor g = r.zeros_like();
    for (std::size_t i = 0; i < h_t.size(); ++i) {
        g.W.noalias() += grad_out[i] * h_t[i].transpose();
        g.b += grad_out[i].rowwise().sum();
    }
    return g;
}

}  // namespace timedistill::teacher
