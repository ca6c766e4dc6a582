#include "cli.hpp"

#include "timedistill/dataio.hpp"
#include "timedistill/distill.hpp"
#include "timedistill/error.hpp"
#include "timedistill/eval.hpp"
#include "timedistill/gradcheck.hpp"
#include "timedistill/student.hpp"
#include "timedistill/teacher.hpp"
#include "timedistill/theorems.hpp"
#include "timedistill/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

namespace timedistill::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kDataset = "dataset.csv";
constexpr const char* kCheckpoint = "checkpoint.tdstu";
constexpr const char* kLockName = ".timedistill.lock";

std::string teacher_file(dataio::Split s) { return std::string("teacher_") + dataio::split_name(s) + ".tdt"; }

void log(const std::string& line) { std::cerr << line << '\n'; }

/// Exclusive claim on an output directory for the lifetime of one command.
class DirLock {
public:
    explicit DirLock(const fs::path& dir) : path_(dir / kLockName) {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw DataError("cannot create output directory '" + dir.string() + "': " + ec.message());
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0) {
            if (errno == EEXIST)
                throw DataError("output directory '" + dir.string() + "' is locked by another run (remove " +
                                path_.string() + " if stale)");
            throw DataError("cannot create lock file '" + path_.string() + "': " + std::strerror(errno));
        }
        const std::string pid = std::to_string(::getpid()) + "\n";
        (void)!::write(fd_, pid.data(), pid.size());
    }
    ~DirLock() {
        ::close(fd_);
        std::error_code ec;
        fs::remove(path_, ec);
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    fs::path path_;
    int fd_ = -1;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write '" + path.string() + "'");
    f << text;
    if (text.empty() || text.back() != '\n') f << '\n';
    if (!f) throw DataError("write failed for '" + path.string() + "'");
}

json read_json(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw DataError("missing '" + path.string() + "'");
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw DataError("malformed JSON in '" + path.string() + "': " + e.what());
    }
}

std::vector<double> parse_list(const std::string& text, const char* what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError(std::string("cannot parse ") + what + " entry '" + item + "'");
        }
    }
    if (out.empty()) throw UsageError(std::string("empty ") + what);
    return out;
}

// ---- prepared runs ---------------------------------------------------------

struct PreparedRun {
    dataio::SeriesDataset ds;
    json manifest;
    std::size_t T = 0;
    std::size_t S = 0;

    dataio::WindowSet windows(dataio::Split s) const { return dataio::WindowSet(ds, s, T, S); }
};

PreparedRun load_run(const fs::path& dir) {
    PreparedRun run;
    run.manifest = read_json(dir / kManifest);
    try {
        run.T = run.manifest.at("T").get<std::size_t>();
        run.S = run.manifest.at("S").get<std::size_t>();
        run.ds = dataio::load_csv(dir / kDataset);
        const auto& split = run.manifest.at("split");
        run.ds.split = dataio::SplitBounds{split.at("train_end").get<std::size_t>(), split.at("val_end").get<std::size_t>()};
        const auto mean = run.manifest.at("train_mean").get<std::vector<double>>();
        const auto stdv = run.manifest.at("train_std").get<std::vector<double>>();
        if (mean.size() != run.ds.channels() || stdv.size() != run.ds.channels() ||
            run.manifest.at("length").get<std::size_t>() != run.ds.length())
            throw DataError("manifest does not describe '" + (dir / kDataset).string() + "'");
        run.ds.train_mean = Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
        run.ds.train_std = Eigen::Map<const Vector>(stdv.data(), static_cast<Eigen::Index>(stdv.size()));
        run.ds.standardized = true;
    } catch (const json::exception& e) {
        throw DataError("incomplete manifest in '" + dir.string() + "': " + e.what());
    }
    return run;
}

teacher::TeacherArtifact load_aligned_teacher(const fs::path& dir, const dataio::WindowSet& w) {
    const auto path = dir / teacher_file(w.split());
    if (!fs::exists(path)) throw DataError("missing teacher artifact '" + path.string() + "' (run train-teacher)");
    auto art = teacher::load_teacher_artifact(path);
    art.check_alignment(w);
    return art;
}

// ---- shared option groups --------------------------------------------------

struct DistillOptions {
    distill::DistillConfig cfg;
    std::string norm = "non-stationary";
    bool no_pred = false, no_feat = false, no_scale = false, no_period = false, no_sup = false;

    void add(CLI::App* app) {
        app->add_option("--alpha", cfg.alpha, "Prediction-level distillation weight")->check(CLI::NonNegativeNumber);
        app->add_option("--beta", cfg.beta, "Feature-level distillation weight")->check(CLI::NonNegativeNumber);
        app->add_option("--tau", cfg.tau, "Softmax temperature of the period distributions")->check(CLI::PositiveNumber);
        app->add_option("--M", cfg.M, "Number of stride-2 downsampling steps");
        app->add_option("--D", cfg.D, "Student hidden width")->check(CLI::PositiveNumber);
        app->add_option("--norm", norm, "Instance normalization: non-stationary or revin")
            ->check(CLI::IsMember({"non-stationary", "revin"}));
        app->add_flag("--no-pred-level", no_pred, "Drop prediction-level distillation");
        app->add_flag("--no-feat-level", no_feat, "Drop feature-level distillation");
        app->add_flag("--no-multi-scale", no_scale, "Drop the multi-scale terms");
        app->add_flag("--no-multi-period", no_period, "Drop the multi-period terms");
        app->add_flag("--no-sup", no_sup, "Drop the supervised term");
        app->add_flag("--gt-pattern", cfg.use_gt_pattern,
                      "Replace the supervised term by multi-scale and multi-period matching against the ground truth");
        app->add_flag("--freeze-regressor", cfg.freeze_regressor, "Keep the feature regressor at its initialization");
    }

    distill::DistillConfig resolve(std::size_t T, std::size_t S) const {
        auto c = cfg;
        c.T = T;
        c.S = S;
        c.norm = student::parse_norm_mode(norm);
        c.use_pred_level = !no_pred;
        c.use_feat_level = !no_feat;
        c.use_scale = !no_scale;
        c.use_period = !no_period;
        c.use_sup = !no_sup;
        c.validate();
        return c;
    }
};

json config_json(const distill::DistillConfig& c) {
    return {{"alpha", c.alpha},
            {"beta", c.beta},
            {"tau", c.tau},
            {"M", c.M},
            {"D", c.D},
            {"T", c.T},
            {"S", c.S},
            {"norm", student::norm_mode_name(c.norm)},
            {"use_scale", c.use_scale},
            {"use_period", c.use_period},
            {"use_pred_level", c.use_pred_level},
            {"use_feat_level", c.use_feat_level},
            {"use_sup", c.use_sup},
            {"use_gt_pattern", c.use_gt_pattern},
            {"freeze_regressor", c.freeze_regressor}};
}

CLI::Option* add_seed(CLI::App* app, std::uint64_t& seed) {
    return app->add_option("--seed", seed, "Random seed")->envname("TD_SEED");
}

// ---- prepare ---------------------------------------------------------------

struct PrepareArgs {
    fs::path out;
    std::string data;
    std::string synthetic;
    std::size_t length = 4000;
    std::size_t channels = 3;
    double noise_std = 0.3;
    double trend_slope = 0.0;
    std::uint64_t seed = 0;
    std::string split = "standard";
    std::string ratios = "0.7,0.1,0.2";
    std::size_t steps_per_hour = 1;
    std::size_t T = 720;
    std::size_t S = 96;
};

std::vector<double> synthetic_periods(const std::string& spec) {
    const std::string key = "periods=";
    if (spec.rfind(key, 0) != 0) throw UsageError("--synthetic expects periods=P1,P2,...");
    return parse_list(spec.substr(key.size()), "period list");
}

int cmd_prepare(const PrepareArgs& a) {
    if (a.data.empty() == a.synthetic.empty()) throw UsageError("prepare needs exactly one of --data or --synthetic");
    dataio::SeriesDataset ds;
    json source;
    if (!a.data.empty()) {
        ds = dataio::load_csv(a.data);
        source = {{"kind", "csv"}, {"path", a.data}};
    } else {
        dataio::SynthSpec spec{a.length, a.channels, synthetic_periods(a.synthetic), a.trend_slope, a.noise_std, a.seed};
        ds = dataio::synth_multiperiod(spec);
        source = {{"kind", "synthetic"},   {"periods", spec.periods}, {"length", spec.length},
                  {"channels", spec.channels}, {"noise_std", spec.noise_std}, {"trend_slope", spec.trend_slope},
                  {"seed", spec.seed}};
    }
    if (a.split == "standard") {
        const auto r = parse_list(a.ratios, "ratio list");
        if (r.size() != 3) throw UsageError("--ratios expects three fractions");
        ds = dataio::split_standard(std::move(ds), {r[0], r[1], r[2]});
    } else if (a.split == "calendar") {
        ds = dataio::split_calendar(std::move(ds), a.steps_per_hour);
    } else {
        throw UsageError("unknown split convention '" + a.split + "'");
    }

    json windows;
    for (const auto s : {dataio::Split::Train, dataio::Split::Val, dataio::Split::Test}) {
        const auto [b, e] = ds.segment(s);
        try {
            windows[dataio::split_name(s)] = dataio::window_count(e - b, a.T, a.S);
        } catch (const UsageError& err) {
            throw DataError(std::string(dataio::split_name(s)) + " split: " + err.what());
        }
    }
    const auto z = dataio::standardize(ds);

    DirLock lock(a.out);
    json m;
    m["version"] = 1;
    m["source"] = source;
    m["T"] = a.T;
    m["S"] = a.S;
    m["C"] = z.channels();
    m["length"] = z.length();
    m["channel_names"] = z.channel_names;
    m["split"] = {{"convention", a.split}, {"train_end", z.split->train_end}, {"val_end", z.split->val_end}};
    m["windows"] = windows;
    m["train_mean"] = std::vector<double>(z.train_mean.data(), z.train_mean.data() + z.train_mean.size());
    m["train_std"] = std::vector<double>(z.train_std.data(), z.train_std.data() + z.train_std.size());
    dataio::write_csv(z, a.out / kDataset);
    write_text(a.out / kManifest, m.dump(2));
    std::cout << m["windows"].dump() << '\n';
    return 0;
}

// ---- train-teacher ---------------------------------------------------------

struct TeacherArgs {
    fs::path run;
    std::string kind = "linear";
    double ridge = 1.0;
    std::size_t D_t = 64;
    std::uint64_t seed = 0;
};

int cmd_train_teacher(const TeacherArgs& a) {
    const auto run = load_run(a.run);
    const dataio::Split splits[] = {dataio::Split::Train, dataio::Split::Val, dataio::Split::Test};

    std::function<teacher::TeacherOutputs(const dataio::WindowBatch&, dataio::Split)> make;
    json report;
    std::optional<teacher::LinearTeacher> linear;
    if (a.kind == "linear") {
        const auto train = run.windows(dataio::Split::Train).all();
        linear = teacher::train_linear_teacher(train.X, train.Y, a.ridge, a.D_t, a.seed);
        make = [&](const dataio::WindowBatch& b, dataio::Split) { return linear->predict(b.X); };
        report = {{"kind", "linear"}, {"ridge", a.ridge}};
    } else if (a.kind.rfind("oracle", 0) == 0) {
        double sigma = 0.0;
        if (a.kind.size() > 6) {
            if (a.kind[6] != ':') throw UsageError("teacher must be linear or oracle:SIGMA");
            sigma = parse_list(a.kind.substr(7), "oracle sigma").at(0);
        }
        make = [&, sigma](const dataio::WindowBatch& b, dataio::Split s) {
            return teacher::oracle_noise_teacher(b.Y, sigma, a.D_t, a.seed + static_cast<std::uint64_t>(s));
        };
        report = {{"kind", "oracle"}, {"sigma", sigma}};
    } else {
        throw UsageError("teacher must be linear or oracle:SIGMA, got '" + a.kind + "'");
    }
    report["D_t"] = a.D_t;
    report["seed"] = a.seed;

    DirLock lock(a.run);
    for (const auto s : splits) {
        const auto w = run.windows(s);
        const auto batch = w.all();
        const auto out = make(batch, s);
        const teacher::TeacherMeta meta{dataio::split_name(s), run.T, run.S, w.channels(), a.D_t, w.size()};
        teacher::write_teacher_artifact(a.run / teacher_file(s), meta, out);
        if (s == dataio::Split::Test) {
            Tensor3 persistence;
            for (const auto& x : batch.X)
                persistence.push_back(x.bottomRows(1).replicate(static_cast<Eigen::Index>(run.S), 1));
            report["test_mse"] = eval::mse(out.y_hat, batch.Y);
            report["test_mae"] = eval::mae(out.y_hat, batch.Y);
            report["persistence_test_mse"] = eval::mse(persistence, batch.Y);
        }
    }
    write_text(a.run / "teacher_report.json", report.dump(2));
    std::cout << report.dump() << '\n';
    return 0;
}

// ---- distill ---------------------------------------------------------------

struct DistillArgs {
    fs::path run;
    fs::path out;
    DistillOptions opts;
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    double lr = 0.01;
    std::size_t patience = 5;
    std::size_t kernel = 25;
    std::uint64_t seed = 0;
    bool quiet = false;
};

int cmd_distill(const DistillArgs& a) {
    const auto run = load_run(a.run);
    const fs::path out = a.out.empty() ? a.run : a.out;
    trainer::TrainConfig tc;
    tc.distill = a.opts.resolve(run.T, run.S);
    tc.epochs = a.epochs;
    tc.batch_size = a.batch_size;
    tc.lr = a.lr;
    tc.patience = a.patience;
    tc.kernel = a.kernel;
    tc.seed = a.seed;

    trainer::TrainData data{run.windows(dataio::Split::Train), run.windows(dataio::Split::Val),
                            run.windows(dataio::Split::Test)};
    const auto w = distill::term_weights(tc.distill);
    const bool needs_teacher = w.scale_y > 0 || w.period_y > 0 || w.scale_h > 0 || w.period_h > 0;
    trainer::TeacherData teacher;
    if (needs_teacher) {
        teacher.train = load_aligned_teacher(a.run, data.train).outputs();
        teacher.val = load_aligned_teacher(a.run, data.val).outputs();
    } else {
        // no term reads the teacher; placeholders keep the window count aligned
        teacher.train.y_hat.assign(data.train.size(), Matrix());
        teacher.train.h.assign(data.train.size(), Matrix::Zero(1, 1));
    }

    DirLock lock(out);
    const auto result = trainer::train_distill(data, teacher, tc, a.quiet ? trainer::ProgressFn{} : log);
    student::save_checkpoint(result.params, out / kCheckpoint);
    write_text(out / "train_report.json", result.report.to_json(true));
    json cfg = {{"distill", config_json(tc.distill)},
                {"epochs", tc.epochs},
                {"batch_size", tc.batch_size},
                {"lr", tc.lr},
                {"patience", tc.patience},
                {"kernel", tc.kernel},
                {"seed", tc.seed},
                {"param_count", result.params.param_count()},
                {"run", a.run.string()}};
    write_text(out / "run_config.json", cfg.dump(2));
    std::cout << json{{"best_epoch", result.report.best_epoch},
                      {"test_mse", result.report.test_mse},
                      {"test_mae", result.report.test_mae}}
                     .dump()
              << '\n';
    return 0;
}

// ---- eval / analyze --------------------------------------------------------

struct EvalArgs {
    fs::path run;
    fs::path checkpoint;
    fs::path out;
    std::string split = "test";
};

int cmd_eval(const EvalArgs& a) {
    const auto run = load_run(a.run);
    const fs::path ckpt = a.checkpoint.empty() ? a.run / kCheckpoint : a.checkpoint;
    const auto params = student::load_checkpoint(ckpt);
    if (params.shape.T != run.T || params.shape.S != run.S)
        throw DataError("checkpoint (T=" + std::to_string(params.shape.T) + ", S=" + std::to_string(params.shape.S) +
                        ") does not match the prepared run");
    const auto w = run.windows(dataio::parse_split(a.split));
    const auto y = w.all().Y;
    const auto pred = trainer::predict(params, w);

    eval::MetricsSummary m{eval::mse(pred, y), eval::mae(pred, y), w.size(), run.S, std::nullopt, std::nullopt};
    if (fs::exists(a.run / teacher_file(w.split()))) {
        const auto t = load_aligned_teacher(a.run, w);
        m.win_ratio = eval::win_ratio(eval::per_sample_mse(pred, y), eval::per_sample_mse(t.outputs().y_hat, y));
    }
    const fs::path out = a.out.empty() ? ckpt.parent_path() : a.out;
    DirLock lock(out.empty() ? fs::path(".") : out);
    write_text((out.empty() ? fs::path(".") : out) / "metrics.json", m.to_json());
    std::cout << m.to_json() << '\n';
    return 0;
}

struct AnalyzeArgs {
    fs::path run;
    fs::path checkpoint;
    fs::path baseline;
    fs::path out;
    std::string split = "test";
    std::size_t window = 0;
    std::size_t M = 3;
};

int cmd_analyze(const AnalyzeArgs& a) {
    const auto run = load_run(a.run);
    const fs::path ckpt = a.checkpoint.empty() ? a.run / kCheckpoint : a.checkpoint;
    const auto w = run.windows(dataio::parse_split(a.split));
    const auto batch = w.all();
    const auto teach = load_aligned_teacher(a.run, w);
    const auto pred = trainer::predict(student::load_checkpoint(ckpt), w);
    const auto e_s = eval::per_sample_mse(pred, batch.Y, "student");
    const auto e_t = eval::per_sample_mse(teach.outputs().y_hat, batch.Y, "teacher");
    std::optional<eval::ErrorVector> e_b;
    if (!a.baseline.empty())
        e_b = eval::per_sample_mse(trainer::predict(student::load_checkpoint(a.baseline), w), batch.Y, "baseline");
    if (a.window >= w.size())
        throw UsageError("--window " + std::to_string(a.window) + " outside [0, " + std::to_string(w.size()) + ")");

    const fs::path out = a.out.empty() ? ckpt.parent_path() : a.out;
    DirLock lock(out);
    std::ostringstream csv;
    csv << "window,start,e_student,e_teacher" << (e_b ? ",e_baseline" : "") << ",student_wins\n";
    for (std::size_t i = 0; i < w.size(); ++i) {
        csv << i << ',' << batch.window_starts[i] << ',' << eval::format_value(e_s.e[i]) << ','
            << eval::format_value(e_t.e[i]);
        if (e_b) csv << ',' << eval::format_value(e_b->e[i]);
        csv << ',' << (e_s.e[i] < e_t.e[i] ? 1 : 0) << '\n';
    }
    write_text(out / "win_analysis.csv", csv.str());

    json summary = {{"split", a.split}, {"n_windows", w.size()}, {"win_ratio", eval::win_ratio(e_s, e_t)}};
    if (e_b) {
        const auto u_m = eval::winners(*e_b, e_t);
        summary["baseline_win_ratio"] = eval::win_ratio(*e_b, e_t);
        summary["baseline_wins"] = u_m.size();
        if (u_m.empty())
            summary["win_keep"] = nullptr;
        else
            summary["win_keep"] = eval::win_keep(u_m, eval::winners(e_s, e_t));
    }
    summary["window"] = a.window;
    write_text(out / "analysis.json", summary.dump(2));
    eval::export_pyramid(pred[a.window], batch.Y[a.window], a.M, out / "pyramid.csv");
    eval::export_spectrogram(pred[a.window], batch.Y[a.window], out / "spectrogram.csv");
    std::cout << summary.dump() << '\n';
    return 0;
}

// ---- gradcheck / verify-theorems -------------------------------------------

struct GradcheckArgs {
    fs::path out = ".";
    DistillOptions opts;
    std::size_t B = 2, T = 16, S = 8, C = 2, D_t = 6;
    std::size_t kernel = 5;
    double h = 1e-5;
    double tolerance = 1e-4;
    std::size_t max_coords = 200;
    std::uint64_t seed = 0;
};

int cmd_gradcheck(GradcheckArgs a) {
    auto cfg = a.opts.resolve(a.T, a.S);
    std::mt19937_64 rng(a.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto tensor = [&](std::size_t rows) {
        Tensor3 t(a.B, Matrix(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(a.C)));
        for (auto& m : t)
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
        return t;
    };
    auto p = student::init_params({a.T, a.S, cfg.D, a.C, cfg.norm, a.kernel, a.seed});
    auto r = teacher::init_regressor(cfg.D, a.D_t, a.seed + 1);
    const auto X = tensor(a.T);
    const auto Y = tensor(a.S);
    const teacher::TeacherOutputs t{tensor(a.S), tensor(a.D_t)};

    student::StudentTrace trace;
    (void)student::forward(p, X, &trace);
    const double kink = std::min(trace.pre_seasonal.cwiseAbs().minCoeff(), trace.pre_trend.cwiseAbs().minCoeff());

    const auto g = distill::distill_gradients(p, r, X, Y, t, cfg);
    auto loss = [&] { return distill::total_loss(Y, student::forward(p, X), t, r, cfg).total; };
    auto params = p.slots();
    auto gs = g.student;
    auto analytic = gs.slots();
    auto gr = g.regressor;
    if (!cfg.freeze_regressor) {
        for (auto& s : r.slots()) params.push_back(s);
        for (auto& s : gr.slots()) analytic.push_back(s);
    }
    const auto report = trainer::gradient_check(loss, params, analytic, a.h, a.max_coords, a.seed);

    DirLock lock(a.out);
    json j = json::parse(report.to_json());
    j["tolerance"] = a.tolerance;
    j["min_relu_margin"] = kink;
    j["passed"] = report.max_rel_error < a.tolerance;
    j["config"] = config_json(cfg);
    write_text(a.out / "gradcheck.json", j.dump(2));
    std::cout << "max_rel_error " << report.max_rel_error << '\n';
    if (!(report.max_rel_error < a.tolerance)) {
        std::ostringstream msg;
        msg << "gradient check failed: max relative error " << report.max_rel_error << " >= " << a.tolerance;
        if (kink < 10.0 * a.h) msg << " (a relu pre-activation lies within " << kink << " of its kink)";
        throw ContractViolation(msg.str());
    }
    return 0;
}

struct TheoremArgs {
    fs::path out = ".";
    std::size_t trials = 10000;
    std::uint64_t seed = 0;
};

int cmd_verify_theorems(const TheoremArgs& a) {
    const auto t1 = trainer::theorem1_suite(a.trials, a.seed);
    const auto t2 = trainer::theorem2_suite(a.trials, a.seed + 1);
    DirLock lock(a.out);
    write_text(a.out / "theorems.json", trainer::suites_to_json({t1, t2}));
    std::cout << "theorem1 min_margin " << t1.min_margin << "\ntheorem2 min_margin " << t2.min_margin << '\n';
    if (!t1.passed() || !t2.passed()) throw ContractViolation("theorem margin below -1e-9");
    return 0;
}

/// Appends `--key value` for every entry of the --config file whose flag is
/// absent from the command line. Boolean `true` becomes a bare flag.
std::vector<std::string> expand_config(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string config;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) config = args[i + 1];
        if (args[i].rfind("--config=", 0) == 0) config = args[i].substr(9);
    }
    if (config.empty()) return args;
    std::ifstream f(config);
    if (!f) return args;  // reported by the option's ExistingFile check
    auto given = [&](const std::string& flag) {
        return std::any_of(args.begin(), args.end(),
                           [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
    };
    auto trim = [](std::string v) {
        const auto b = v.find_first_not_of(" \t\r");
        const auto e = v.find_last_not_of(" \t\r");
        v = b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
        if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) v = v.substr(1, v.size() - 2);
        return v;
    };
    std::vector<std::string> extra;
    std::string line;
    while (std::getline(f, line)) {
        line = trim(line.substr(0, line.find('#')));
        if (line.empty() || line.front() == '[') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw UsageError("config line without '=': " + line);
        const std::string flag = "--" + trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (flag == "--config" || given(flag)) continue;
        if (value == "true") {
            extra.push_back(flag);
        } else if (value != "false") {
            extra.push_back(flag);
            extra.push_back(value);
        }
    }
    args.insert(args.end(), extra.begin(), extra.end());
    return args;
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"Distill a lightweight MLP forecaster from a frozen teacher", "timedistill"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.set_version_flag("--version", "timedistill 0.1.0");

    auto with_config = [](CLI::App* sub) {
        sub->add_option("--config", "Read options from a key = value file (command-line flags take precedence)")
            ->check(CLI::ExistingFile);
        sub->option_defaults()->always_capture_default();
        return sub;
    };

    PrepareArgs prep;
    auto* p = with_config(app.add_subcommand("prepare", "Load or synthesize a dataset, split, standardize, write a manifest"));
    p->add_option("--out", prep.out, "Run directory")->required();
    p->add_option("--data", prep.data, "CSV file with a header row")->check(CLI::ExistingFile);
    p->add_option("--synthetic", prep.synthetic, "Synthetic series, e.g. periods=24,96");
    p->add_option("--length", prep.length, "Synthetic series length");
    p->add_option("--channels", prep.channels, "Synthetic channel count");
    p->add_option("--noise-std", prep.noise_std, "Synthetic gaussian noise level");
    p->add_option("--trend-slope", prep.trend_slope, "Synthetic linear trend per step");
    add_seed(p, prep.seed);
    p->add_option("--split", prep.split, "Split convention: standard or calendar")
        ->check(CLI::IsMember({"standard", "calendar"}));
    p->add_option("--ratios", prep.ratios, "Train,val,test fractions for the standard split");
    p->add_option("--steps-per-hour", prep.steps_per_hour, "Sampling rate for the calendar split");
    p->add_option("--T", prep.T, "Lookback length");
    p->add_option("--S", prep.S, "Forecast horizon");

    TeacherArgs targ;
    auto* t = with_config(app.add_subcommand("train-teacher", "Fit or materialize a teacher and write artifacts per split"));
    t->add_option("--run", targ.run, "Run directory created by prepare")->required();
    t->add_option("--teacher", targ.kind, "linear, oracle or oracle:SIGMA");
    t->add_option("--ridge", targ.ridge, "Ridge penalty of the linear teacher");
    t->add_option("--D-t", targ.D_t, "Teacher feature width")->check(CLI::PositiveNumber);
    add_seed(t, targ.seed);

    DistillArgs darg;
    auto* d = with_config(app.add_subcommand("distill", "Train the student against the teacher artifacts"));
    d->add_option("--run", darg.run, "Run directory created by prepare")->required();
    d->add_option("--out", darg.out, "Output directory (defaults to the run directory)");
    darg.opts.add(d);
    d->add_option("--epochs", darg.epochs, "Maximum number of epochs")->check(CLI::PositiveNumber);
    d->add_option("--batch-size", darg.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
    d->add_option("--lr", darg.lr, "Adam learning rate")->check(CLI::PositiveNumber);
    d->add_option("--patience", darg.patience, "Early-stopping patience in epochs");
    d->add_option("--kernel", darg.kernel, "Moving-average kernel of the decomposition (odd)");
    add_seed(d, darg.seed);
    d->add_flag("--quiet", darg.quiet, "Suppress per-epoch progress lines");

    EvalArgs earg;
    auto* e = with_config(app.add_subcommand("eval", "Compute MSE/MAE (and win ratio against the teacher)"));
    e->add_option("--run", earg.run, "Run directory created by prepare")->required();
    e->add_option("--checkpoint", earg.checkpoint, "Student checkpoint (defaults to <run>/checkpoint.tdstu)");
    e->add_option("--out", earg.out, "Output directory (defaults to the checkpoint directory)");
    e->add_option("--split", earg.split, "Split to evaluate")->check(CLI::IsMember({"train", "val", "test"}));

    AnalyzeArgs aarg;
    auto* an = with_config(app.add_subcommand("analyze", "Win ratio, win keep and pyramid/spectrogram exports"));
    an->add_option("--run", aarg.run, "Run directory created by prepare")->required();
    an->add_option("--checkpoint", aarg.checkpoint, "Distilled student checkpoint");
    an->add_option("--baseline", aarg.baseline, "Plain student checkpoint, enables win keep");
    an->add_option("--out", aarg.out, "Output directory (defaults to the checkpoint directory)");
    an->add_option("--split", aarg.split, "Split to analyze")->check(CLI::IsMember({"train", "val", "test"}));
    an->add_option("--window", aarg.window, "Window index for the pyramid and spectrogram exports");
    an->add_option("--M", aarg.M, "Pyramid depth of the export");

    GradcheckArgs garg;
    garg.opts.cfg.alpha = garg.opts.cfg.beta = 1.0;
    garg.opts.cfg.D = 8;
    garg.opts.cfg.M = 2;
    auto* g = with_config(app.add_subcommand("gradcheck", "Finite-difference check of the full objective's gradients"));
    g->add_option("--out", garg.out, "Output directory");
    garg.opts.add(g);
    g->add_option("--B", garg.B, "Batch size")->check(CLI::PositiveNumber);
    g->add_option("--T", garg.T, "Lookback length")->check(CLI::PositiveNumber);
    g->add_option("--S", garg.S, "Horizon")->check(CLI::PositiveNumber);
    g->add_option("--C", garg.C, "Channels")->check(CLI::PositiveNumber);
    g->add_option("--D-t", garg.D_t, "Teacher feature width")->check(CLI::PositiveNumber);
    g->add_option("--kernel", garg.kernel, "Decomposition kernel (odd)");
    g->add_option("--fd-step", garg.h, "Finite-difference step")->check(CLI::PositiveNumber);
    g->add_option("--tolerance", garg.tolerance, "Maximum accepted relative error");
    g->add_option("--max-coords", garg.max_coords, "Coordinates sampled per tensor");
    add_seed(g, garg.seed);

    TheoremArgs harg;
    auto* h = with_config(app.add_subcommand("verify-theorems", "Randomized margin suites for the mixup bounds"));
    h->add_option("--out", harg.out, "Output directory");
    h->add_option("--trials", harg.trials, "Random instances per suite")->check(CLI::PositiveNumber);
    add_seed(h, harg.seed);

    try {
        auto args = expand_config(argc, argv);
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*p) return cmd_prepare(prep);
        if (*t) return cmd_train_teacher(targ);
        if (*d) return cmd_distill(darg);
        if (*e) return cmd_eval(earg);
        if (*an) return cmd_analyze(aarg);
        if (*g) return cmd_gradcheck(garg);
        if (*h) return cmd_verify_theorems(harg);
    } catch (const UsageError& err) {
        std::cerr << "error: " << err.what() << '\n';
        return 1;
    } catch (const DataError& err) {
        std::cerr << "error: " << err.what() << '\n';
        return 2;
    } catch (const ContractViolation& err) {
        std::cerr << "contract violation: " << err.what() << '\n';
        return 3;
    } catch (const fs::filesystem_error& err) {
        std::cerr << "error: " << err.what() << '\n';
        return 2;
    }
    return 1;
}

}  // namespace timedistill::cli
