#pragma once

#include "timedistill/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>

namespace timedistill::student {

enum class NormMode { NonStationary, Revin };

const char* norm_mode_name(NormMode m);
NormMode parse_norm_mode(const std::string& s);

inline constexpr double kInstanceEps = 1e-5;
inline constexpr double kRevinEps = 1e-10;

struct StudentShape {
    std::size_t T = 720;  // lookback
    std::size_t S = 96;   // horizon
    std::size_t D = 512;  // hidden width
    std::size_t C = 1;    // channels (only affects revin vectors)
    NormMode norm = NormMode::NonStationary;
    std::size_t kernel = 25;
    std::uint64_t seed = 0;
};

/// Decomposition + two-layer MLP weights, shared across channels.
/// The same type doubles as the gradient container.
struct StudentParams {
    StudentShape shape;
    Matrix W1_seasonal;  // [D × T]
    Vector b1_seasonal;  // [D]
    Matrix W1_trend;     // [D × T]
    Vector b1_trend;     // [D]
    Matrix W2;           // [S × D]
    Vector b2;           // [S]
    Vector revin_gamma;  // [C], empty unless revin
    Vector revin_beta;   // [C], empty unless revin

    /// Flat views in checkpoint field order.
    ParamList slots();
    std::size_t param_count() const;
    StudentParams zeros_like() const;
    bool all_finite() const;
};

StudentParams init_params(const StudentShape& shape);

/// Centered moving average with replicate padding; seasonal = x - trend.
std::pair<Matrix, Matrix> decompose(const Matrix& x, std::size_t kernel);

/// Moving-average trend and its adjoint, column-wise.
Matrix moving_average(const Matrix& x, std::size_t kernel);
Matrix moving_average_adjoint(const Matrix& g, std::size_t kernel);

struct StudentOutput {
    Tensor3 y_hat;     // [B][S × C], de-normalized
    Tensor3 h;         // [B][D × C], normalized-space features
    Matrix norm_mean;  // [B × C]
    Matrix norm_std;   // [B × C], σ + eps
};

/// Intermediate values kept for the backward pass.
struct StudentTrace {
    std::size_t batch = 0;
    std::size_t channels = 0;
    Matrix z;         // instance-normalized lookback [T × B·C]
    Matrix seasonal;  // [T × B·C]
    Matrix trend;     // [T × B·C]
    Matrix pre_seasonal;  // [D × B·C]
    Matrix pre_trend;     // [D × B·C]
    Matrix hidden;        // [D × B·C]
    Matrix y_norm;        // [S × B·C]
    Vector scale;         // σ + eps per column
};

StudentOutput forward(const StudentParams& p, const Tensor3& X, StudentTrace* trace = nullptr);

/// Reverse pass: gradients of a scalar loss given its adjoints w.r.t. y_hat and h.
/// Either adjoint may be empty (treated as zero).
StudentParams backward(const StudentParams& p, const StudentTrace& trace, const Tensor3& grad_y,
                       const Tensor3& grad_h);

std::size_t param_count(const StudentParams& p);

void save_checkpoint(const StudentParams& p, const std::filesystem::path& path);
StudentParams load_checkpoint(const std::filesystem::path& path);

}  // namespace timedistill::student
