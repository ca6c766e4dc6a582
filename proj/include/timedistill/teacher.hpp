#pragma once

#include "timedistill/dataio.hpp"
#include "timedistill/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

namespace timedistill::teacher {

/// Frozen teacher predictions [N][S × C] and features [N][D_t × C], indexed by window.
struct TeacherOutputs {
    Tensor3 y_hat;
    Tensor3 h;

    std::size_t size() const { return y_hat.size(); }
    TeacherOutputs gather(std::span<const std::size_t> indices) const;
};

/// Window alignment declared by a teacher artifact.
struct TeacherMeta {
    std::string split_id;
    std::size_t T = 0;
    std::size_t S = 0;
    std::size_t C = 0;
    std::size_t D_t = 0;
    std::size_t N = 0;
};

/// FNV-1a over "split_id:T:S:N", hex encoded.
std::string alignment_checksum(const TeacherMeta& meta);

/// Read-only teacher backed by a TDTEACH1 artifact.
class TeacherArtifact {
public:
    TeacherArtifact(TeacherMeta meta, TeacherOutputs outputs);

    const TeacherMeta& meta() const { return meta_; }
    const TeacherOutputs& outputs() const { return outputs_; }

    /// Prediction [S × C] and feature [D_t × C] of window `index`.
    std::pair<const Matrix&, const Matrix&> query(std::size_t index) const;
    TeacherOutputs gather(std::span<const std::size_t> indices) const;

    /// Throws DataError unless the artifact covers exactly this split's windows.
    void check_alignment(const dataio::WindowSet& windows) const;

private:
    TeacherMeta meta_;
    TeacherOutputs outputs_;
};

void write_teacher_artifact(const std::filesystem::path& path, const TeacherMeta& meta, const TeacherOutputs& out);
TeacherArtifact load_teacher_artifact(const std::filesystem::path& path);

/// Ground truth plus gaussian noise; features are a fixed random projection of the noisy prediction.
TeacherOutputs oracle_noise_teacher(const Tensor3& Y, double sigma, std::size_t D_t, std::uint64_t seed);

/// Channel-shared ridge map A: [S × T] with projected lookback-tail features.
struct LinearTeacher {
    Matrix A;           // [S × T]
    Matrix projection;  // [D_t × D_t], applied to the last D_t lookback values

    TeacherOutputs predict(const Tensor3& X) const;
};

LinearTeacher train_linear_teacher(const Tensor3& X, const Tensor3& Y, double ridge, std::size_t D_t,
                                   std::uint64_t seed);

/// Affine map aligning teacher features D_t → D, per channel.
struct Regressor {
    Matrix W;  // [D × D_t]
    Vector b;  // [D]

    ParamList slots();
    Regressor zeros_like() const;
};

Regressor init_regressor(std::size_t D, std::size_t D_t, std::uint64_t seed);
Tensor3 regressor_apply(const Regressor& r, const Tensor3& h_t);

/// Gradients w.r.t. W and b given the adjoint of the regressor output.
Regressor regressor_backward(const Regressor& r, const Tensor3& h_t, const Tensor3& grad_out);

}  // namespace timedistill::teacher
