#include "timedistill/eval.hpp"

#include "timedistill/error.hpp"
#include "timedistill/multiscale.hpp"
#include "timedistill/spectral.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace timedistill::eval {

namespace {

void check(const Tensor3& a, const Tensor3& b, const char* what) {
    if (!same_shape(a, b) || a.empty()) throw UsageError(std::string(what) + ": shape mismatch");
}

}  // namespace

double mse(const Tensor3& y_hat, const Tensor3& y) {
    check(y_hat, y, "mse");
    double acc = 0.0;
    for (std::size_t b = 0; b < y.size(); ++b) acc += (y_hat[b] - y[b]).squaredNorm() / static_cast<double>(y[b].size());
    return acc / static_cast<double>(y.size());
}

double mae(const Tensor3& y_hat, const Tensor3& y) {
    check(y_hat, y, "mae");
    double acc = 0.0;
    for (std::size_t b = 0; b < y.size(); ++b)
        acc += (y_hat[b] - y[b]).cwiseAbs().sum() / static_cast<double>(y[b].size());
    return acc / static_cast<double>(y.size());
}

ErrorVector per_sample_mse(const Tensor3& y_hat, const Tensor3& y, std::string label) {
    check(y_hat, y, "per_sample_mse");
    ErrorVector out{{}, std::move(label)};
    out.e.reserve(y.size());
    for (std::size_t b = 0; b < y.size(); ++b)
        out.e.push_back((y_hat[b] - y[b]).squaredNorm() / static_cast<double>(y[b].size()));
    return out;
}

double win_ratio(const ErrorVector& e_s, const ErrorVector& e_t) {
    if (e_s.e.size() != e_t.e.size()) throw UsageError("win_ratio: error vectors differ in length");
    if (e_s.e.empty()) throw UsageError("win_ratio: empty error vectors");
    return static_cast<double>(winners(e_s, e_t).size()) / static_cast<double>(e_s.e.size());
}

std::vector<std::size_t> winners(const ErrorVector& a, const ErrorVector& b) {
    if (a.e.size() != b.e.size()) throw UsageError("winners: error vectors differ in length");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < a.e.size(); ++i)
        if (a.e[i] < b.e[i]) out.push_back(i);
    return out;
}

double win_keep(const std::vector<std::size_t>& u_m, const std::vector<std::size_t>& u_t) {
    if (u_m.empty()) throw UsageError("win_keep: U_M is empty");
    std::vector<std::size_t> a = u_m, b = u_t;
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
    std::sort(b.begin(), b.end());
    b.erase(std::unique(b.begin(), b.end()), b.end());
    std::vector<std::size_t> both;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
    return static_cast<double>(both.size()) / static_cast<double>(a.size());
}

std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

namespace {

std::ofstream open_export(const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write '" + path.string() + "'");
    return f;
}

}  // namespace

void export_pyramid(const Matrix& y_hat, const Matrix& y, std::size_t M, const std::filesystem::path& path) {
    if (!same_shape(y_hat, y)) throw UsageError("export_pyramid: shape mismatch");
    const auto pred = multiscale::build_pyramid(y_hat, M);
    const auto truth = multiscale::build_pyramid(y, M);
    auto f = open_export(path);
    f << "scale,t,channel,prediction,truth\n";
    for (std::size_t m = 0; m <= M; ++m) {
        const auto& p = pred.levels[m];
        const auto& t = truth.levels[m];
        for (Eigen::Index c = 0; c < p.cols(); ++c)
            for (Eigen::Index i = 0; i < p.rows(); ++i)
                f << m << ',' << i << ',' << c << ',' << format_value(p(i, c)) << ',' << format_value(t(i, c)) << '\n';
    }
    if (!f) throw DataError("write failed for '" + path.string() + "'");
}

void export_spectrogram(const Matrix& y_hat, const Matrix& y, const std::filesystem::path& path) {
    if (!same_shape(y_hat, y)) throw UsageError("export_spectrogram: shape mismatch");
    const auto sp = spectral::dft_amplitude(y_hat);
    const auto st = spectral::dft_amplitude(y);
    auto f = open_export(path);
    f << "bin,period,channel,amp_prediction,amp_truth\n";
    for (Eigen::Index c = 0; c < sp.amp.cols(); ++c) {
        for (Eigen::Index k = 1; k <= sp.amp.rows(); ++k) {
            f << k << ',' << sp.period_of_bin(static_cast<std::size_t>(k)) << ',' << c << ','
              << format_value(sp.amp(k - 1, c)) << ',' << format_value(st.amp(k - 1, c)) << '\n';
        }
    }
    if (!f) throw DataError("write failed for '" + path.string() + "'");
}

std::string MetricsSummary::to_json() const {
    nlohmann::ordered_json j = {{"mse", mse}, {"mae", mae}, {"n_windows", n_windows}, {"horizon", horizon}};
    if (win_ratio) j["win_ratio"] = *win_ratio;
    if (win_keep) j["win_keep"] = *win_keep;
    return j.dump(2);
}

}  // namespace timedistill::eval
