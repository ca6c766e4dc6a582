#pragma once

#include "timedistill/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace timedistill::dataio {

enum class Split { Train = 0, Val = 1, Test = 2 };

const char* split_name(Split s);
Split parse_split(const std::string& name);

struct SplitBounds {
    std::size_t train_end = 0;
    std::size_t val_end = 0;
};

/// Raw multivariate series [time × channel] with split boundaries and train statistics.
struct SeriesDataset {
    Matrix values;
    std::vector<std::string> channel_names;
    std::optional<SplitBounds> split;
    Vector train_mean;
    Vector train_std;
    bool standardized = false;

    std::size_t length() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t channels() const { return static_cast<std::size_t>(values.cols()); }

    /// Half-open row range [begin, end) of a split. Requires split boundaries.
    std::pair<std::size_t, std::size_t> segment(Split s) const;
};

SeriesDataset load_csv(const std::filesystem::path& path);
SeriesDataset parse_csv(const std::string& text, const std::string& source_name = "<memory>");
void write_csv(const SeriesDataset& ds, const std::filesystem::path& path);

struct SplitRatios {
    double train = 0.7;
    double val = 0.1;
    double test = 0.2;
};

/// Fixes split boundaries from fractions and fits per-channel train mean/std.
SeriesDataset split_standard(SeriesDataset ds, SplitRatios ratios);

/// ETT-style calendar split: 12/4/4 months of 30 days at `steps_per_hour` samples per hour.
SeriesDataset split_calendar(SeriesDataset ds, std::size_t steps_per_hour);

/// Global z-score with the fitted train statistics. Callable once per dataset.
SeriesDataset standardize(SeriesDataset ds);
SeriesDataset destandardize(SeriesDataset ds);

inline constexpr double kStdFloor = 1e-8;

/// One batch of windows: X[b] is [T × C], Y[b] is [S × C].
struct WindowBatch {
    Tensor3 X;
    Tensor3 Y;
    std::vector<std::size_t> window_starts;  // absolute row index of each lookback start
    std::vector<std::size_t> window_index;   // index of each window within its split
};

/// All stride-1 windows of one split; materializes batches on demand.
class WindowSet {
public:
    WindowSet(const SeriesDataset& ds, Split split, std::size_t lookback, std::size_t horizon);

    std::size_t size() const { return count_; }
    std::size_t lookback() const { return lookback_; }
    std::size_t horizon() const { return horizon_; }
    std::size_t channels() const { return static_cast<std::size_t>(segment_.cols()); }
    Split split() const { return split_; }
    std::size_t start(std::size_t i) const { return begin_ + i; }

    WindowBatch gather(std::span<const std::size_t> indices) const;
    WindowBatch all() const;

    /// Consecutive batches of at most `batch_size` windows in ascending order.
    std::vector<WindowBatch> batches(std::size_t batch_size) const;

private:
    Matrix segment_;
    Split split_;
    std::size_t begin_;
    std::size_t count_;
    std::size_t lookback_;
    std::size_t horizon_;
};

/// Number of stride-1 windows in a segment; throws UsageError if too short.
std::size_t window_count(std::size_t segment_length, std::size_t lookback, std::size_t horizon);

std::vector<WindowBatch> make_windows(const SeriesDataset& ds, Split split, std::size_t lookback,
                                      std::size_t horizon, std::size_t batch_size);

struct SynthSpec {
    std::size_t length = 4000;
    std::size_t channels = 3;
    std::vector<double> periods{24.0, 96.0};
    double trend_slope = 0.0;
    double noise_std = 0.0;
    std::uint64_t seed = 0;
};

SeriesDataset synth_multiperiod(const SynthSpec& spec);

}  // namespace timedistill::dataio
