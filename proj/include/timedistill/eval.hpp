#pragma once

#include "timedistill/types.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace timedistill::eval {

/// Per-window MSE of one model over a window set.
struct ErrorVector {
    std::vector<double> e;
    std::string label;
};

/// Mean over the batch of each sample's 1/(S·C) Σ squared error.
double mse(const Tensor3& y_hat, const Tensor3& y);
double mae(const Tensor3& y_hat, const Tensor3& y);

ErrorVector per_sample_mse(const Tensor3& y_hat, const Tensor3& y, std::string label = {});

/// Fraction of windows where e_s < e_t strictly.
double win_ratio(const ErrorVector& e_s, const ErrorVector& e_t);

/// Window indices where `a` strictly beats `b`, ascending.
std::vector<std::size_t> winners(const ErrorVector& a, const ErrorVector& b);

/// |U_M ∩ U_T| / |U_M|.
double win_keep(const std::vector<std::size_t>& u_m, const std::vector<std::size_t>& u_t);

/// Rows (scale, t, channel, prediction, truth) for every pyramid level of one window.
void export_pyramid(const Matrix& y_hat, const Matrix& y, std::size_t M, const std::filesystem::path& path);

/// Rows (bin, period, channel, amp_prediction, amp_truth) of the DC-removed spectra.
void export_spectrogram(const Matrix& y_hat, const Matrix& y, const std::filesystem::path& path);

/// 12-significant-digit formatting used by every export.
std::string format_value(double v);

struct MetricsSummary {
    double mse = 0.0;
    double mae = 0.0;
    std::size_t n_windows = 0;
    std::size_t horizon = 0;
    std::optional<double> win_ratio;
    std::optional<double> win_keep;

    std::string to_json() const;
};

}  // namespace timedistill::eval
