#include "timedistill/trainer.hpp"

#include "timedistill/error.hpp"
#include "timedistill/eval.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace timedistill::trainer {

OptimState make_optim_state(const ParamList& params, double lr) {
    OptimState s;
    s.lr = lr;
    for (const auto& p : params) {
        s.m.push_back(Vector::Zero(p.values.size()));
        s.v.push_back(Vector::Zero(p.values.size()));
    }
    return s;
}

void adam_step(ParamList& params, const ParamList& grads, OptimState& st) {
    if (params.size() != grads.size() || params.size() != st.m.size())
        throw UsageError("adam_step: parameter, gradient and state lists differ in length");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].values.size() != grads[i].values.size() || params[i].values.size() != st.m[i].size())
            throw UsageError("adam_step: shape mismatch for '" + params[i].name + "'");
        if (!grads[i].values.allFinite())
            throw ContractViolation("non-finite gradient in tensor '" + grads[i].name + "'");
    }
    ++st.step;
    const double t = static_cast<double>(st.step);
    const double c1 = 1.0 - std::pow(st.beta1, t);
    const double c2 = 1.0 - std::pow(st.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& g = grads[i].values;
        st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
        st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * g.cwiseAbs2();
        params[i].values.array() -=
            st.lr * (st.m[i].array() / c1) / ((st.v[i].array() / c2).sqrt() + st.eps);
    }
}

bool EarlyStopper::update(std::size_t epoch, double value) {
    improved_ = best_epoch_ == 0 || value < best_;
    if (improved_) {
        best_ = value;
        best_epoch_ = epoch;
        since_best_ = 0;
        return false;
    }
    ++since_best_;
    return since_best_ >= patience_;
}

namespace {

nlohmann::ordered_json breakdown_json(const distill::LossBreakdown& l) {
    return {{"sup", l.sup},           {"scale_y", l.scale_y},     {"scale_h", l.scale_h},
            {"period_y", l.period_y}, {"period_h", l.period_h},   {"gt_scale", l.gt_scale},
            {"gt_period", l.gt_period}, {"total", l.total}};
}

}  // namespace

std::string TrainReport::to_json(bool include_timing) const {
    nlohmann::ordered_json j;
    j["epochs"] = nlohmann::ordered_json::array();
    std::vector<double> seconds;
    for (const auto& e : epochs) {
        nlohmann::ordered_json rec = {{"epoch", e.epoch}};
        const auto train = breakdown_json(e.train);
        for (const auto& [k, v] : train.items()) rec[k] = v;
        rec["val_mse"] = e.val_mse;
        if (e.val) rec["val"] = breakdown_json(*e.val);
        if (include_timing) rec["seconds"] = e.seconds;
        j["epochs"].push_back(rec);
        seconds.push_back(e.seconds);
    }
    j["best_epoch"] = best_epoch;
    j["stopped_early"] = stopped_early;
    j["test_mse"] = test_mse;
    j["test_mae"] = test_mae;
    if (include_timing) j["seconds_per_epoch"] = seconds;
    return j.dump(2);
}

Tensor3 predict(const student::StudentParams& p, const dataio::WindowSet& windows, std::size_t chunk) {
    Tensor3 out;
    out.reserve(windows.size());
    std::vector<std::size_t> idx;
    for (std::size_t first = 0; first < windows.size(); first += chunk) {
        idx.resize(std::min(chunk, windows.size() - first));
        std::iota(idx.begin(), idx.end(), first);
        auto pred = student::forward(p, windows.gather(idx).X);
        for (auto& m : pred.y_hat) out.push_back(std::move(m));
    }
    return out;
}

namespace {

Tensor3 targets(const dataio::WindowSet& w) {
    std::vector<std::size_t> idx(w.size());
    std::iota(idx.begin(), idx.end(), 0);
    return w.gather(idx).Y;
}

distill::LossBreakdown evaluate_breakdown(const student::StudentParams& p, const teacher::Regressor& r,
                                          const dataio::WindowSet& w, const teacher::TeacherOutputs& t,
                                          const distill::DistillConfig& cfg, std::size_t chunk) {
    distill::LossBreakdown acc;
    std::vector<std::size_t> idx;
    for (std::size_t first = 0; first < w.size(); first += chunk) {
        idx.resize(std::min(chunk, w.size() - first));
        std::iota(idx.begin(), idx.end(), first);
        const auto batch = w.gather(idx);
        const auto out = student::forward(p, batch.X);
        auto l = distill::total_loss(batch.Y, out, t.gather(idx), r, cfg);
        l *= static_cast<double>(idx.size());
        acc += l;
    }
    acc *= 1.0 / static_cast<double>(w.size());
    return acc;
}

}  // namespace

TrainResult train_distill(const TrainData& data, const TeacherData& teacher, const TrainConfig& cfg,
                          const ProgressFn& progress) {
    cfg.distill.validate();
    if (cfg.epochs == 0 || cfg.batch_size == 0) throw UsageError("epochs and batch size must be positive");
    if (data.train.lookback() != cfg.distill.T || data.train.horizon() != cfg.distill.S)
        throw UsageError("window shape does not match the distillation config");
    if (teacher.train.size() != data.train.size())
        throw DataError("teacher covers " + std::to_string(teacher.train.size()) + " train windows, data has " +
                        std::to_string(data.train.size()));
    if (teacher.val && teacher.val->size() != data.val.size())
        throw DataError("teacher validation outputs are not aligned with validation windows");
    if (teacher.train.size() == 0) throw DataError("no training windows");

    student::StudentShape shape;
    shape.T = cfg.distill.T;
    shape.S = cfg.distill.S;
    shape.D = cfg.distill.D;
    shape.C = data.train.channels();
    shape.norm = cfg.distill.norm;
    shape.kernel = cfg.kernel;
    shape.seed = cfg.seed;
    TrainResult res{student::init_params(shape), {}, {}};
    const auto D_t = static_cast<std::size_t>(teacher.train.h.front().rows());
    res.regressor = teacher::init_regressor(cfg.distill.D, D_t, cfg.seed ^ 0x5eed5eedULL);

    auto p_slots = res.params.slots();
    auto r_slots = res.regressor.slots();
    auto st_student = make_optim_state(p_slots, cfg.lr);
    auto st_regressor = make_optim_state(r_slots, cfg.lr);

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);
    const Tensor3 val_y = targets(data.val);

    EarlyStopper stopper(cfg.patience);
    student::StudentParams best_params = res.params;
    teacher::Regressor best_regressor = res.regressor;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), rng);
        EpochRecord rec;
        rec.epoch = epoch;
        for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
            const std::span<const std::size_t> idx(order.data() + first,
                                                   std::min(cfg.batch_size, order.size() - first));
            const auto batch = data.train.gather(idx);
            auto g = distill::distill_gradients(res.params, res.regressor, batch.X, batch.Y, teacher.train.gather(idx),
                                                cfg.distill);
            if (!std::isfinite(g.loss.total)) {
                std::ostringstream msg;
                msg << "non-finite training loss at epoch " << epoch << ", batch starting at " << first;
                throw ContractViolation(msg.str());
            }
            auto g_slots = g.student.slots();
            adam_step(p_slots, g_slots, st_student);
            if (!cfg.distill.freeze_regressor) {
                auto gr_slots = g.regressor.slots();
                adam_step(r_slots, gr_slots, st_regressor);
            }
            g.loss *= static_cast<double>(idx.size());
            rec.train += g.loss;
        }
        rec.train *= 1.0 / static_cast<double>(order.size());

        rec.val_mse = eval::mse(predict(res.params, data.val), val_y);
        if (teacher.val)
            rec.val = evaluate_breakdown(res.params, res.regressor, data.val, *teacher.val, cfg.distill, 256);
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        res.report.epochs.push_back(rec);

        const bool stop = stopper.update(epoch, rec.val_mse);
        if (stopper.improved()) {
            best_params = res.params;
            best_regressor = res.regressor;
        }
        if (progress) {
            std::ostringstream msg;
            msg << "epoch " << epoch << " train_total=" << rec.train.total << " train_sup=" << rec.train.sup
                << " val_mse=" << rec.val_mse << (stopper.improved() ? " *" : "") << " (" << rec.seconds << "s)";
            progress(msg.str());
        }
        if (stop) {
            res.report.stopped_early = epoch < cfg.epochs;
            break;
        }
    }
    res.report.best_epoch = stopper.best_epoch();
    res.params = std::move(best_params);
    res.regressor = std::move(best_regressor);

    const Tensor3 test_y = targets(data.test);
    const Tensor3 test_pred = predict(res.params, data.test);
    res.report.test_mse = eval::mse(test_pred, test_y);
    res.report.test_mae = eval::mae(test_pred, test_y);
    return res;
}

}  // namespace timedistill::trainer
