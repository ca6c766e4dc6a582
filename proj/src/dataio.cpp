#include "timedistill/dataio.hpp"

#include "timedistill/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace timedistill {

bool same_shape(const Tensor3& a, const Tensor3& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!same_shape(a[i], b[i])) return false;
    }
    return true;
}

bool all_finite(const Tensor3& t) {
    return std::all_of(t.begin(), t.end(), [](const Matrix& m) { return m.allFinite(); });
}

}  // namespace timedistill

namespace timedistill::dataio {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const auto comma = line.find(',', pos);
        out.push_back(trim(line.substr(pos, comma == std::string_view::npos ? line.npos : comma - pos)));
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    return out;
}

}  // namespace

const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

Split parse_split(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "val") return Split::Val;
    if (name == "test") return Split::Test;
    throw UsageError("unknown split '" + name + "' (expected train, val or test)");
}

std::pair<std::size_t, std::size_t> SeriesDataset::segment(Split s) const {
    if (!split) throw UsageError("dataset has no split boundaries");
    switch (s) {
        case Split::Train: return {0, split->train_end};
        case Split::Val: return {split->train_end, split->val_end};
        case Split::Test: return {split->val_end, length()};
    }
    return {0, 0};
}

SeriesDataset parse_csv(const std::string& text, const std::string& source_name) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw DataError(source_name + ": empty file, header row required");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM

    const auto header = split_fields(line);
    const bool has_date = !header.empty() && header.front() == "date";
    const std::size_t first = has_date ? 1 : 0;
    if (header.size() <= first) throw DataError(source_name + ": header has no data columns");

    SeriesDataset ds;
    for (std::size_t j = first; j < header.size(); ++j) ds.channel_names.emplace_back(header[j]);
    const std::size_t channels = ds.channel_names.size();

    std::vector<double> flat;
    std::size_t rows = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_fields(line);
        if (fields.size() != header.size()) {
            std::ostringstream msg;
            msg << source_name << ": row " << rows + 1 << " (line " << line_no << ") has "
                << fields.size() << " fields, header has " << header.size();
            throw DataError(msg.str());
        }
        for (std::size_t j = first; j < fields.size(); ++j) {
            const auto cell = fields[j];
            double v = 0.0;
            const auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            const auto& col = ds.channel_names[j - first];
            if (ec != std::errc() || end != cell.data() + cell.size() || cell.empty()) {
                std::ostringstream msg;
                msg << source_name << ": row " << rows + 1 << ", column '" << col
                    << "': cannot parse '" << cell << "' as a number";
                throw DataError(msg.str());
            }
            if (!std::isfinite(v)) {
                std::ostringstream msg;
                msg << source_name << ": row " << rows + 1 << ", column '" << col
                    << "': non-finite value '" << cell << "'";
                throw DataError(msg.str());
            }
            flat.push_back(v);
        }
        ++rows;
    }
    if (rows < 2) throw DataError(source_name + ": fewer than 2 data rows");

    ds.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(channels));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < channels; ++c) ds.values(r, c) = flat[r * channels + c];
    return ds;
}

SeriesDataset load_csv(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open '" + path.string() + "'");
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse_csv(buf.str(), path.string());
}

void write_csv(const SeriesDataset& ds, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write '" + path.string() + "'");
    for (std::size_t c = 0; c < ds.channels(); ++c) f << (c ? "," : "") << ds.channel_names[c];
    f << '\n';
    char buf[32];
    for (Eigen::Index r = 0; r < ds.values.rows(); ++r) {
        for (Eigen::Index c = 0; c < ds.values.cols(); ++c) {
            // shortest round-trip representation
            const auto res = std::to_chars(buf, buf + sizeof buf, ds.values(r, c));
            if (c) f << ',';
            f.write(buf, res.ptr - buf);
        }
        f << '\n';
    }
    if (!f) throw DataError("write failed for '" + path.string() + "'");
}

namespace {

void fit_train_stats(SeriesDataset& ds) {
    const auto n = static_cast<Eigen::Index>(ds.split->train_end);
    const auto train = ds.values.topRows(n);
    ds.train_mean = train.colwise().mean().transpose();
    ds.train_std.resize(ds.values.cols());
    for (Eigen::Index c = 0; c < ds.values.cols(); ++c) {
        const double var = (train.col(c).array() - ds.train_mean(c)).square().mean();
        ds.train_std(c) = std::sqrt(var);
    }
}

void check_bounds(const SeriesDataset& ds, SplitBounds b) {
    if (!(0 < b.train_end && b.train_end < b.val_end && b.val_end < ds.length())) {
        std::ostringstream msg;
        msg << "invalid split boundaries train_end=" << b.train_end << " val_end=" << b.val_end
            << " for length " << ds.length();
        throw UsageError(msg.str());
    }
}

}  // namespace

SeriesDataset split_standard(SeriesDataset ds, SplitRatios r) {
    if (ds.standardized) throw UsageError("cannot re-split a standardized dataset");
    if (!(r.train > 0.0 && r.val > 0.0 && r.test > 0.0))
        throw UsageError("split ratios must all be positive");
    if (std::abs(r.train + r.val + r.test - 1.0) > 1e-9) throw UsageError("split ratios must sum to 1");
    const auto len = static_cast<double>(ds.length());
    SplitBounds b;
    b.train_end = static_cast<std::size_t>(std::floor(len * r.train));
    b.val_end = b.train_end + static_cast<std::size_t>(std::floor(len * r.val));
    check_bounds(ds, b);
    ds.split = b;
    fit_train_stats(ds);
    return ds;
}

SeriesDataset split_calendar(SeriesDataset ds, std::size_t steps_per_hour) {
    if (ds.standardized) throw UsageError("cannot re-split a standardized dataset");
    if (steps_per_hour == 0) throw UsageError("steps_per_hour must be positive");
    const std::size_t month = 30 * 24 * steps_per_hour;
    SplitBounds b{12 * month, 16 * month};
    if (ds.length() < 20 * month) {
        std::ostringstream msg;
        msg << "calendar split needs " << 20 * month << " rows, dataset has " << ds.length();
        throw UsageError(msg.str());
    }
    // Rows past month 20 are dropped, as in the reference ETT pipeline.
    ds.values.conservativeResize(static_cast<Eigen::Index>(20 * month), Eigen::NoChange);
    check_bounds(ds, b);
    ds.split = b;
    fit_train_stats(ds);
    return ds;
}

SeriesDataset standardize(SeriesDataset ds) {
    if (!ds.split) throw UsageError("standardize requires a fitted split");
    if (ds.standardized) throw UsageError("dataset is already standardized");
    for (Eigen::Index c = 0; c < ds.values.cols(); ++c)
        ds.values.col(c) = (ds.values.col(c).array() - ds.train_mean(c)) / (ds.train_std(c) + kStdFloor);
    ds.standardized = true;
    return ds;
}

SeriesDataset destandardize(SeriesDataset ds) {
    if (!ds.standardized) throw UsageError("dataset is not standardized");
    for (Eigen::Index c = 0; c < ds.values.cols(); ++c)
        ds.values.col(c) = ds.values.col(c).array() * (ds.train_std(c) + kStdFloor) + ds.train_mean(c);
    ds.standardized = false;
    return ds;
}

std::size_t window_count(std::size_t segment_length, std::size_t lookback, std::size_t horizon) {
    if (lookback == 0 || horizon == 0) throw UsageError("lookback and horizon must be positive");
    if (segment_length < lookback + horizon) {
        std::ostringstream msg;
        msg << "segment of length " << segment_length << " is shorter than lookback+horizon = "
            << lookback + horizon;
        throw UsageError(msg.str());
    }
    return segment_length - lookback - horizon + 1;
}

WindowSet::WindowSet(const SeriesDataset& ds, Split split, std::size_t lookback, std::size_t horizon)
    : split_(split), lookback_(lookback), horizon_(horizon) {
    const auto [b, e] = ds.segment(split);
    begin_ = b;
    count_ = window_count(e - b, lookback, horizon);
    segment_ = ds.values.middleRows(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(e - b));
}

WindowBatch WindowSet::gather(std::span<const std::size_t> indices) const {
    WindowBatch out;
    out.X.reserve(indices.size());
    out.Y.reserve(indices.size());
    const auto T = static_cast<Eigen::Index>(lookback_);
    const auto S = static_cast<Eigen::Index>(horizon_);
    for (const auto i : indices) {
        if (i >= count_) throw UsageError("window index out of range");
        const auto s = static_cast<Eigen::Index>(i);
        out.X.emplace_back(segment_.middleRows(s, T));
        out.Y.emplace_back(segment_.middleRows(s + T, S));
        out.window_starts.push_back(begin_ + i);
        out.window_index.push_back(i);
    }
    return out;
}

WindowBatch WindowSet::all() const {
    std::vector<std::size_t> idx(count_);
    for (std::size_t i = 0; i < count_; ++i) idx[i] = i;
    return gather(idx);
}

std::vector<WindowBatch> WindowSet::batches(std::size_t batch_size) const {
    if (batch_size == 0) throw UsageError("batch size must be positive");
    std::vector<WindowBatch> out;
    std::vector<std::size_t> idx;
    for (std::size_t first = 0; first < count_; first += batch_size) {
        idx.clear();
        for (std::size_t i = first; i < std::min(count_, first + batch_size); ++i) idx.push_back(i);
        out.push_back(gather(idx));
    }
    return out;
}

std::vector<WindowBatch> make_windows(const SeriesDataset& ds, Split split, std::size_t lookback,
                                      std::size_t horizon, std::size_t batch_size) {
    return WindowSet(ds, split, lookback, horizon).batches(batch_size);
}

SeriesDataset synth_multiperiod(const SynthSpec& spec) {
    if (spec.periods.empty()) throw UsageError("synth_multiperiod needs at least one period");
    if (spec.channels == 0) throw UsageError("synth_multiperiod needs at least one channel");
    const double max_period = *std::max_element(spec.periods.begin(), spec.periods.end());
    if (*std::min_element(spec.periods.begin(), spec.periods.end()) <= 0.0)
        throw UsageError("periods must be positive");
    if (static_cast<double>(spec.length) < 4.0 * max_period)
        throw UsageError("synthetic length must be at least 4x the longest period");

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> amp(0.5, 1.5);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::normal_distribution<double> noise(0.0, 1.0);

    SeriesDataset ds;
    ds.values.resize(static_cast<Eigen::Index>(spec.length), static_cast<Eigen::Index>(spec.channels));
    for (std::size_t c = 0; c < spec.channels; ++c) {
        ds.channel_names.push_back("ch" + std::to_string(c));
        std::vector<std::pair<double, double>> terms;
        for (std::size_t p = 0; p < spec.periods.size(); ++p) {
            const double a = amp(rng);
            terms.emplace_back(a, phase(rng));
        }
        for (std::size_t t = 0; t < spec.length; ++t) {
            double v = spec.trend_slope * static_cast<double>(t);
            for (std::size_t p = 0; p < terms.size(); ++p) {
                v += terms[p].first *
                     std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / spec.periods[p] + terms[p].second);
            }
            ds.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = v;
        }
    }
    if (spec.noise_std > 0.0) {
        for (Eigen::Index c = 0; c < ds.values.cols(); ++c)
            for (Eigen::Index t = 0; t < ds.values.rows(); ++t) ds.values(t, c) += spec.noise_std * noise(rng);
    }
    return ds;
}

}  // namespace timedistill::dataio
