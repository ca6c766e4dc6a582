#pragma once

#include "timedistill/dataio.hpp"
#include "timedistill/distill.hpp"
#include "timedistill/student.hpp"
#include "timedistill/teacher.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace timedistill::trainer {

struct OptimState {
    std::vector<Vector> m;
    std::vector<Vector> v;
    std::uint64_t step = 0;
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

OptimState make_optim_state(const ParamList& params, double lr);

/// Bias-corrected Adam update in place. Throws ContractViolation naming the
/// first tensor whose gradient is not finite; parameters are untouched then.
void adam_step(ParamList& params, const ParamList& grads, OptimState& state);

/// Patience-based early stopping on a minimized validation criterion.
class EarlyStopper {
public:
    explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

    /// Records an epoch (1-based); returns true when training should stop.
    bool update(std::size_t epoch, double value);

    bool improved() const { return improved_; }
    std::size_t best_epoch() const { return best_epoch_; }
    double best_value() const { return best_; }

private:
    std::size_t patience_;
    std::size_t best_epoch_ = 0;
    std::size_t since_best_ = 0;
    double best_ = 0.0;
    bool improved_ = false;
};

struct TrainConfig {
    distill::DistillConfig distill;
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    double lr = 0.01;
    std::size_t patience = 5;
    std::size_t kernel = 25;
    std::uint64_t seed = 0;
};

struct EpochRecord {
    std::size_t epoch = 0;
    distill::LossBreakdown train;
    std::optional<distill::LossBreakdown> val;
    double val_mse = 0.0;
    double seconds = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    bool stopped_early = false;
    double test_mse = 0.0;
    double test_mae = 0.0;

    /// JSON document; `include_timing=false` drops wall-clock fields.
    std::string to_json(bool include_timing = true) const;
};

struct TrainData {
    dataio::WindowSet train;
    dataio::WindowSet val;
    dataio::WindowSet test;
};

struct TeacherData {
    teacher::TeacherOutputs train;
    std::optional<teacher::TeacherOutputs> val;
};

struct TrainResult {
    student::StudentParams params;
    teacher::Regressor regressor;
    TrainReport report;
};

/// Line-oriented progress sink; receives one message per epoch.
using ProgressFn = std::function<void(const std::string&)>;

TrainResult train_distill(const TrainData& data, const TeacherData& teacher, const TrainConfig& cfg,
                          const ProgressFn& progress = {});

/// Predictions of a student over every window of a set, evaluated in chunks.
Tensor3 predict(const student::StudentParams& p, const dataio::WindowSet& windows, std::size_t chunk = 256);

}  // namespace timedistill::trainer
