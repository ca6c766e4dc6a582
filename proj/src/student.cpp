#include "timedistill/student.hpp"

#include "binio.hpp"
#include "timedistill/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <random>

namespace timedistill::student {

const char* norm_mode_name(NormMode m) { return m == NormMode::Revin ? "revin" : "non-stationary"; }

NormMode parse_norm_mode(const std::string& s) {
    if (s == "revin") return NormMode::Revin;
    if (s == "non-stationary" || s == "nonstationary") return NormMode::NonStationary;
    throw UsageError("unknown normalization mode '" + s + "' (expected non-stationary or revin)");
}

ParamList StudentParams::slots() {
    ParamList out;
    out.push_back(make_slot("W1_seasonal", W1_seasonal));
    out.push_back(make_slot("b1_seasonal", b1_seasonal));
    out.push_back(make_slot("W1_trend", W1_trend));
    out.push_back(make_slot("b1_trend", b1_trend));
    out.push_back(make_slot("W2", W2));
    out.push_back(make_slot("b2", b2));
    if (shape.norm == NormMode::Revin) {
        out.push_back(make_slot("revin_gamma", revin_gamma));
        out.push_back(make_slot("revin_beta", revin_beta));
    }
    return out;
}

std::size_t StudentParams::param_count() const {
    return static_cast<std::size_t>(W1_seasonal.size() + b1_seasonal.size() + W1_trend.size() + b1_trend.size() +
                                    W2.size() + b2.size() + revin_gamma.size() + revin_beta.size());
}

StudentParams StudentParams::zeros_like() const {
    StudentParams z;
    z.shape = shape;
    z.W1_seasonal = Matrix::Zero(W1_seasonal.rows(), W1_seasonal.cols());
    z.b1_seasonal = Vector::Zero(b1_seasonal.size());
    z.W1_trend = Matrix::Zero(W1_trend.rows(), W1_trend.cols());
    z.b1_trend = Vector::Zero(b1_trend.size());
    z.W2 = Matrix::Zero(W2.rows(), W2.cols());
    z.b2 = Vector::Zero(b2.size());
    z.revin_gamma = Vector::Zero(revin_gamma.size());
    z.revin_beta = Vector::Zero(revin_beta.size());
    return z;
}

bool StudentParams::all_finite() const {
    return W1_seasonal.allFinite() && b1_seasonal.allFinite() && W1_trend.allFinite() && b1_trend.allFinite() &&
           W2.allFinite() && b2.allFinite() && revin_gamma.allFinite() && revin_beta.allFinite();
}

std::size_t param_count(const StudentParams& p) { return p.param_count(); }

StudentParams init_params(const StudentShape& shape) {
    if (shape.T < 1 || shape.S < 1 || shape.D < 1) throw UsageError("T, S and D must be at least 1");
    if (shape.kernel % 2 == 0) throw UsageError("decomposition kernel must be odd");
    if (shape.norm == NormMode::Revin && shape.C < 1) throw UsageError("revin needs the channel count");
    const auto T = static_cast<Eigen::Index>(shape.T);
    const auto S = static_cast<Eigen::Index>(shape.S);
    const auto D = static_cast<Eigen::Index>(shape.D);

    std::mt19937_64 rng(shape.seed);
    auto fill = [&rng](Matrix& m, double fan_in) {
        const double bound = 1.0 / std::sqrt(fan_in);
        std::uniform_real_distribution<double> u(-bound, bound);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    };

    StudentParams p;
    p.shape = shape;
    p.W1_seasonal.resize(D, T);
    p.W1_trend.resize(D, T);
    p.W2.resize(S, D);
    fill(p.W1_seasonal, static_cast<double>(T));
    fill(p.W1_trend, static_cast<double>(T));
    fill(p.W2, static_cast<double>(D));
    p.b1_seasonal = Vector::Zero(D);
    p.b1_trend = Vector::Zero(D);
    p.b2 = Vector::Zero(S);
    if (shape.norm == NormMode::Revin) {
        p.revin_gamma = Vector::Ones(static_cast<Eigen::Index>(shape.C));
        p.revin_beta = Vector::Zero(static_cast<Eigen::Index>(shape.C));
    }
    return p;
}

Matrix moving_average(const Matrix& x, std::size_t kernel) {
    if (kernel == 0 || kernel % 2 == 0) throw UsageError("moving-average kernel must be odd and positive");
    const auto pad = static_cast<Eigen::Index>(kernel / 2);
    const Eigen::Index n = x.rows();
    const double inv = 1.0 / static_cast<double>(kernel);
    Matrix out(n, x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        for (Eigen::Index i = 0; i < n; ++i) {
            double acc = 0.0;
            for (Eigen::Index j = i - pad; j <= i + pad; ++j) acc += x(std::clamp<Eigen::Index>(j, 0, n - 1), c);
            out(i, c) = acc * inv;
        }
    }
    return out;
}

Matrix moving_average_adjoint(const Matrix& g, std::size_t kernel) {
    const auto pad = static_cast<Eigen::Index>(kernel / 2);
    const Eigen::Index n = g.rows();
    const double inv = 1.0 / static_cast<double>(kernel);
    Matrix out = Matrix::Zero(n, g.cols());
    for (Eigen::Index c = 0; c < g.cols(); ++c)
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = i - pad; j <= i + pad; ++j) out(std::clamp<Eigen::Index>(j, 0, n - 1), c) += g(i, c) * inv;
    return out;
}

std::pair<Matrix, Matrix> decompose(const Matrix& x, std::size_t kernel) {
    Matrix trend = moving_average(x, kernel);
    Matrix seasonal = x - trend;
    return {std::move(seasonal), std::move(trend)};
}

namespace {

void check_input(const StudentParams& p, const Tensor3& X) {
    if (X.empty()) throw UsageError("forward: empty batch");
    const auto T = static_cast<Eigen::Index>(p.shape.T);
    const Eigen::Index C = X.front().cols();
    for (const auto& x : X) {
        if (x.rows() != T || x.cols() != C) throw UsageError("forward: input window shape mismatch");
    }
    if (p.shape.norm == NormMode::Revin && p.revin_gamma.size() != C)
        throw UsageError("forward: revin parameters sized for a different channel count");
}

// Columns of the stacked layout: j = b·C + c.
Matrix stack(const Tensor3& xs) {
    const Eigen::Index rows = xs.front().rows();
    const Eigen::Index C = xs.front().cols();
    Matrix out(rows, static_cast<Eigen::Index>(xs.size()) * C);
    for (std::size_t b = 0; b < xs.size(); ++b) out.middleCols(static_cast<Eigen::Index>(b) * C, C) = xs[b];
    return out;
}

Tensor3 unstack(const Matrix& m, std::size_t batch, Eigen::Index C) {
    Tensor3 out;
    out.reserve(batch);
    for (std::size_t b = 0; b < batch; ++b) out.emplace_back(m.middleCols(static_cast<Eigen::Index>(b) * C, C));
    return out;
}

}  // namespace

StudentOutput forward(const StudentParams& p, const Tensor3& X, StudentTrace* trace) {
    check_input(p, X);
    const std::size_t B = X.size();
    const Eigen::Index C = X.front().cols();
    const bool revin = p.shape.norm == NormMode::Revin;

    Matrix x = stack(X);
    const Eigen::Index cols = x.cols();
    StudentOutput out;
    out.norm_mean.resize(static_cast<Eigen::Index>(B), C);
    out.norm_std.resize(static_cast<Eigen::Index>(B), C);
    Vector mean(cols), scale(cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        const double mu = x.col(j).mean();
        const double sigma = std::sqrt((x.col(j).array() - mu).square().mean());
        mean(j) = mu;
        scale(j) = sigma + kInstanceEps;
        out.norm_mean(j / C, j % C) = mu;
        out.norm_std(j / C, j % C) = scale(j);
    }
    Matrix z = (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
    Matrix xn = z;
    if (revin) {
        for (Eigen::Index j = 0; j < cols; ++j) xn.col(j) = z.col(j).array() * p.revin_gamma(j % C) + p.revin_beta(j % C);
    }
    auto [seasonal, trend] = decompose(xn, p.shape.kernel);
    Matrix pre_s = (p.W1_seasonal * seasonal).colwise() + p.b1_seasonal;
    Matrix pre_t = (p.W1_trend * trend).colwise() + p.b1_trend;
    Matrix hidden = pre_s.cwiseMax(0.0) + pre_t.cwiseMax(0.0);
    Matrix y_norm = (p.W2 * hidden).colwise() + p.b2;

    Matrix y = y_norm;
    for (Eigen::Index j = 0; j < cols; ++j) {
        if (revin) y.col(j) = (y.col(j).array() - p.revin_beta(j % C)) / (p.revin_gamma(j % C) + kRevinEps);
        y.col(j) = y.col(j).array() * scale(j) + mean(j);
    }

    out.y_hat = unstack(y, B, C);
    out.h = unstack(hidden, B, C);
    if (trace) {
        trace->batch = B;
        trace->channels = static_cast<std::size_t>(C);
        trace->z = std::move(z);
        trace->seasonal = std::move(seasonal);
        trace->trend = std::move(trend);
        trace->pre_seasonal = std::move(pre_s);
        trace->pre_trend = std::move(pre_t);
        trace->hidden = std::move(hidden);
        trace->y_norm = std::move(y_norm);
        trace->scale = std::move(scale);
    }
    return out;
}

StudentParams backward(const StudentParams& p, const StudentTrace& tr, const Tensor3& grad_y, const Tensor3& grad_h) {
    const auto C = static_cast<Eigen::Index>(tr.channels);
    const Eigen::Index cols = tr.hidden.cols();
    const bool revin = p.shape.norm == NormMode::Revin;
    StudentParams g = p.zeros_like();

    Matrix g_ynorm = Matrix::Zero(tr.y_norm.rows(), cols);
    if (!grad_y.empty()) {
        if (grad_y.size() != tr.batch) throw UsageError("backward: grad_y batch mismatch");
        g_ynorm = stack(grad_y);
        for (Eigen::Index j = 0; j < cols; ++j) {
            g_ynorm.col(j) *= tr.scale(j);
            if (revin) {
                const Eigen::Index c = j % C;
                const double denom = p.revin_gamma(c) + kRevinEps;
                g_ynorm.col(j) /= denom;
                g.revin_beta(c) -= g_ynorm.col(j).sum();
                g.revin_gamma(c) -= g_ynorm.col(j).dot((tr.y_norm.col(j).array() - p.revin_beta(c)).matrix()) / denom;
            }
        }
    }

    g.W2.noalias() = g_ynorm * tr.hidden.transpose();
    g.b2 = g_ynorm.rowwise().sum();
    Matrix g_hidden = p.W2.transpose() * g_ynorm;
    if (!grad_h.empty()) {
        if (grad_h.size() != tr.batch) throw UsageError("backward: grad_h batch mismatch");
        g_hidden += stack(grad_h);
    }

    const Matrix g_pre_s = (tr.pre_seasonal.array() > 0.0).select(g_hidden, 0.0);
    const Matrix g_pre_t = (tr.pre_trend.array() > 0.0).select(g_hidden, 0.0);
    g.W1_seasonal.noalias() = g_pre_s * tr.seasonal.transpose();
    g.b1_seasonal = g_pre_s.rowwise().sum();
    g.W1_trend.noalias() = g_pre_t * tr.trend.transpose();
    g.b1_trend = g_pre_t.rowwise().sum();

    if (revin) {
        const Matrix g_seasonal = p.W1_seasonal.transpose() * g_pre_s;
        const Matrix g_trend = p.W1_trend.transpose() * g_pre_t;
        // seasonal = xn - MA(xn), trend = MA(xn)
        const Matrix g_xn = g_seasonal + moving_average_adjoint(g_trend - g_seasonal, p.shape.kernel);
        for (Eigen::Index j = 0; j < cols; ++j) {
            g.revin_gamma(j % C) += g_xn.col(j).dot(tr.z.col(j));
            g.revin_beta(j % C) += g_xn.col(j).sum();
        }
    }
    return g;
}

namespace {
constexpr std::string_view kCheckpointMagic = "TDSTU1\n";
}

void save_checkpoint(const StudentParams& p, const std::filesystem::path& path) {
    nlohmann::json meta = {{"T", p.shape.T},
                           {"S", p.shape.S},
                           {"D", p.shape.D},
                           {"C", p.shape.C},
                           {"norm_mode", norm_mode_name(p.shape.norm)},
                           {"kernel", p.shape.kernel},
                           {"seed", p.shape.seed}};
    const std::string text = meta.dump();
    binio::Writer w;
    w.bytes(kCheckpointMagic);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
    w.bytes(text);
    StudentParams copy = p;
    for (const auto& slot : copy.slots())
        for (Eigen::Index i = 0; i < slot.values.size(); ++i) w.put<double>(slot.values(i));
    w.save(path);
}

StudentParams load_checkpoint(const std::filesystem::path& path) {
    auto r = binio::Reader::open(path);
    if (r.size() < kCheckpointMagic.size() || r.take(kCheckpointMagic.size(), "magic") != kCheckpointMagic)
        throw DataError(path.string() + ": not a student checkpoint (bad magic)");
    const auto meta_len = r.get<std::uint32_t>("metadata length");
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(r.take(meta_len, "metadata"));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": malformed checkpoint metadata: " + e.what());
    }
    StudentShape shape;
    try {
        shape.T = meta.at("T").get<std::size_t>();
        shape.S = meta.at("S").get<std::size_t>();
        shape.D = meta.at("D").get<std::size_t>();
        shape.C = meta.at("C").get<std::size_t>();
        shape.norm = parse_norm_mode(meta.at("norm_mode").get<std::string>());
        shape.kernel = meta.at("kernel").get<std::size_t>();
        shape.seed = meta.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": incomplete checkpoint metadata: " + e.what());
    } catch (const UsageError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    if (shape.T == 0 || shape.S == 0 || shape.D == 0 || shape.kernel % 2 == 0 ||
        shape.T * shape.D > (std::size_t{1} << 32))
        throw DataError(path.string() + ": implausible checkpoint shape");
    StudentParams p = init_params(shape);
    const std::size_t expected = p.param_count() * sizeof(double);
    if (r.remaining() != expected) {
        throw DataError(path.string() + ": parameter payload size mismatch: expected " + std::to_string(expected) +
                        " bytes, got " + std::to_string(r.remaining()));
    }
    for (auto& slot : p.slots())
        for (Eigen::Index i = 0; i < slot.values.size(); ++i) slot.values(i) = r.get<double>("parameters");
    if (!p.all_finite()) throw DataError(path.string() + ": checkpoint contains non-finite parameters");
    return p;
}

}  // namespace timedistill::student
