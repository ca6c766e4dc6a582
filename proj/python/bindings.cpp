#include "timedistill/dataio.hpp"
#include "timedistill/distill.hpp"
#include "timedistill/error.hpp"
#include "timedistill/eval.hpp"
#include "timedistill/multiscale.hpp"
#include "timedistill/spectral.hpp"
#include "timedistill/student.hpp"
#include "timedistill/teacher.hpp"
#include "timedistill/theorems.hpp"
#include "timedistill/trainer.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace timedistill;

namespace {

using Array3 = py::array_t<double, py::array::c_style | py::array::forcecast>;

// [B, rows, cols] numpy <-> vector of column-major matrices
Tensor3 to_tensor(const Array3& a) {
    if (a.ndim() != 3) throw UsageError("expected a 3-d array [batch, rows, cols]");
    const auto r = a.unchecked<3>();
    Tensor3 t(static_cast<std::size_t>(r.shape(0)), Matrix(r.shape(1), r.shape(2)));
    for (py::ssize_t b = 0; b < r.shape(0); ++b)
        for (py::ssize_t i = 0; i < r.shape(1); ++i)
            for (py::ssize_t j = 0; j < r.shape(2); ++j) t[static_cast<std::size_t>(b)](i, j) = r(b, i, j);
    return t;
}

Array3 to_array(const Tensor3& t) {
    const py::ssize_t rows = t.empty() ? 0 : t.front().rows();
    const py::ssize_t cols = t.empty() ? 0 : t.front().cols();
    Array3 a({static_cast<py::ssize_t>(t.size()), rows, cols});
    auto w = a.mutable_unchecked<3>();
    for (std::size_t b = 0; b < t.size(); ++b)
        for (py::ssize_t i = 0; i < rows; ++i)
            for (py::ssize_t j = 0; j < cols; ++j) w(static_cast<py::ssize_t>(b), i, j) = t[b](i, j);
    return a;
}

py::dict breakdown(const distill::LossBreakdown& l) {
    py::dict d;
    d["sup"] = l.sup;
    d["scale_y"] = l.scale_y;
    d["scale_h"] = l.scale_h;
    d["period_y"] = l.period_y;
    d["period_h"] = l.period_h;
    d["gt_scale"] = l.gt_scale;
    d["gt_period"] = l.gt_period;
    d["total"] = l.total;
    return d;
}

py::dict suite(const trainer::SuiteResult& s) {
    py::dict d;
    d["name"] = s.name;
    d["trials"] = s.trials;
    d["min_margin"] = s.min_margin;
    d["passed"] = s.passed();
    return d;
}

}  // namespace

PYBIND11_MODULE(_timedistill, m) {
    m.doc() = "Native core of timedistill";

    py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
    py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_RuntimeError);

    // dataio
    py::enum_<dataio::Split>(m, "Split")
        .value("train", dataio::Split::Train)
        .value("val", dataio::Split::Val)
        .value("test", dataio::Split::Test);

    py::class_<dataio::SeriesDataset>(m, "SeriesDataset")
        .def(py::init<>())
        .def_readwrite("values", &dataio::SeriesDataset::values)
        .def_readwrite("channel_names", &dataio::SeriesDataset::channel_names)
        .def_readonly("train_mean", &dataio::SeriesDataset::train_mean)
        .def_readonly("train_std", &dataio::SeriesDataset::train_std)
        .def_readonly("standardized", &dataio::SeriesDataset::standardized)
        .def_property_readonly("length", &dataio::SeriesDataset::length)
        .def_property_readonly("channels", &dataio::SeriesDataset::channels)
        .def_property_readonly("split_bounds", [](const dataio::SeriesDataset& d) -> py::object {
            if (!d.split) return py::none();
            return py::make_tuple(d.split->train_end, d.split->val_end);
        });

    m.def(
        "synth_multiperiod",
        [](std::size_t length, std::size_t channels, std::vector<double> periods, double trend_slope, double noise_std,
           std::uint64_t seed) {
            return dataio::synth_multiperiod({length, channels, std::move(periods), trend_slope, noise_std, seed});
        },
        py::arg("length") = 4000, py::arg("channels") = 3, py::arg("periods") = std::vector<double>{24.0, 96.0},
        py::arg("trend_slope") = 0.0, py::arg("noise_std") = 0.0, py::arg("seed") = 0);
    m.def("load_csv", &dataio::load_csv, py::arg("path"));
    m.def("write_csv", &dataio::write_csv, py::arg("dataset"), py::arg("path"));
    m.def(
        "split_standard",
        [](dataio::SeriesDataset ds, double train, double val, double test) {
            return dataio::split_standard(std::move(ds), {train, val, test});
        },
        py::arg("dataset"), py::arg("train") = 0.7, py::arg("val") = 0.1, py::arg("test") = 0.2);
    m.def("split_calendar", &dataio::split_calendar, py::arg("dataset"), py::arg("steps_per_hour") = 1);
    m.def("standardize", &dataio::standardize, py::arg("dataset"));
    m.def("destandardize", &dataio::destandardize, py::arg("dataset"));
    m.def("window_count", &dataio::window_count, py::arg("segment_length"), py::arg("lookback"), py::arg("horizon"));

    py::class_<dataio::WindowSet>(m, "WindowSet")
        .def(py::init<const dataio::SeriesDataset&, dataio::Split, std::size_t, std::size_t>(), py::arg("dataset"),
             py::arg("split"), py::arg("lookback"), py::arg("horizon"))
        .def("__len__", &dataio::WindowSet::size)
        .def_property_readonly("lookback", &dataio::WindowSet::lookback)
        .def_property_readonly("horizon", &dataio::WindowSet::horizon)
        .def_property_readonly("channels", &dataio::WindowSet::channels)
        .def("arrays", [](const dataio::WindowSet& w) {
            const auto b = w.all();
            return py::make_tuple(to_array(b.X), to_array(b.Y));
        }, "All windows as (X [N, T, C], Y [N, S, C]).");

    // spectral / multiscale
    m.def("dft_amplitude", [](const Matrix& x) { return spectral::dft_amplitude(x).amp; }, py::arg("x"),
          "DC-removed amplitudes of bins 1..L/2 for each column of x [L, C].");
    m.def(
        "period_distribution",
        [](const Matrix& x, double tau) { return spectral::period_distribution(spectral::dft_amplitude(x), tau).q; },
        py::arg("x"), py::arg("tau") = 0.5);
    m.def(
        "build_pyramid", [](const Matrix& x, std::size_t M) { return multiscale::build_pyramid(x, M).levels; },
        py::arg("x"), py::arg("M"));

    // student
    py::enum_<student::NormMode>(m, "NormMode")
        .value("non_stationary", student::NormMode::NonStationary)
        .value("revin", student::NormMode::Revin);

    py::class_<student::StudentParams>(m, "Student")
        .def_property_readonly("T", [](const student::StudentParams& p) { return p.shape.T; })
        .def_property_readonly("S", [](const student::StudentParams& p) { return p.shape.S; })
        .def_property_readonly("D", [](const student::StudentParams& p) { return p.shape.D; })
        .def_property_readonly("C", [](const student::StudentParams& p) { return p.shape.C; })
        .def_property_readonly("norm", [](const student::StudentParams& p) { return p.shape.norm; })
        .def("param_count", &student::StudentParams::param_count)
        .def(
            "forward",
            [](const student::StudentParams& p, const Array3& X) {
                const auto out = student::forward(p, to_tensor(X));
                return py::make_tuple(to_array(out.y_hat), to_array(out.h));
            },
            py::arg("X"), "Returns (y_hat [B, S, C], h [B, D, C]).")
        .def("save", [](const student::StudentParams& p, const std::filesystem::path& path) {
            student::save_checkpoint(p, path);
        });
    m.def(
        "init_student",
        [](std::size_t T, std::size_t S, std::size_t D, std::size_t C, student::NormMode norm, std::size_t kernel,
           std::uint64_t seed) { return student::init_params({T, S, D, C, norm, kernel, seed}); },
        py::arg("T"), py::arg("S"), py::arg("D") = 512, py::arg("C") = 1,
        py::arg("norm") = student::NormMode::NonStationary, py::arg("kernel") = 25, py::arg("seed") = 0);
    m.def("load_student", &student::load_checkpoint, py::arg("path"));

    // teacher
    m.def(
        "oracle_noise_teacher",
        [](const Array3& Y, double sigma, std::size_t D_t, std::uint64_t seed) {
            const auto t = teacher::oracle_noise_teacher(to_tensor(Y), sigma, D_t, seed);
            return py::make_tuple(to_array(t.y_hat), to_array(t.h));
        },
        py::arg("Y"), py::arg("sigma"), py::arg("D_t") = 64, py::arg("seed") = 0);
    m.def(
        "write_teacher_artifact",
        [](const std::filesystem::path& path, const std::string& split_id, std::size_t T, const Array3& y_hat,
           const Array3& h) {
            teacher::TeacherOutputs out{to_tensor(y_hat), to_tensor(h)};
            const auto N = out.y_hat.size();
            if (N == 0 || out.h.size() != N) throw UsageError("teacher outputs must be non-empty and aligned");
            const teacher::TeacherMeta meta{split_id,
                                            T,
                                            static_cast<std::size_t>(out.y_hat.front().rows()),
                                            static_cast<std::size_t>(out.y_hat.front().cols()),
                                            static_cast<std::size_t>(out.h.front().rows()),
                                            N};
            teacher::write_teacher_artifact(path, meta, out);
        },
        py::arg("path"), py::arg("split_id"), py::arg("T"), py::arg("y_hat"), py::arg("h"));
    m.def(
        "load_teacher_artifact",
        [](const std::filesystem::path& path) {
            const auto a = teacher::load_teacher_artifact(path);
            py::dict meta;
            meta["split_id"] = a.meta().split_id;
            meta["T"] = a.meta().T;
            meta["S"] = a.meta().S;
            meta["C"] = a.meta().C;
            meta["D_t"] = a.meta().D_t;
            meta["N"] = a.meta().N;
            return py::make_tuple(meta, to_array(a.outputs().y_hat), to_array(a.outputs().h));
        },
        py::arg("path"), "Returns (meta, y_hat, h).");

    // distill
    py::class_<distill::DistillConfig>(m, "DistillConfig")
        .def(py::init<>())
        .def_readwrite("alpha", &distill::DistillConfig::alpha)
        .def_readwrite("beta", &distill::DistillConfig::beta)
        .def_readwrite("tau", &distill::DistillConfig::tau)
        .def_readwrite("M", &distill::DistillConfig::M)
        .def_readwrite("use_scale", &distill::DistillConfig::use_scale)
        .def_readwrite("use_period", &distill::DistillConfig::use_period)
        .def_readwrite("use_pred_level", &distill::DistillConfig::use_pred_level)
        .def_readwrite("use_feat_level", &distill::DistillConfig::use_feat_level)
        .def_readwrite("use_sup", &distill::DistillConfig::use_sup)
        .def_readwrite("use_gt_pattern", &distill::DistillConfig::use_gt_pattern)
        .def_readwrite("freeze_regressor", &distill::DistillConfig::freeze_regressor)
        .def_readwrite("norm", &distill::DistillConfig::norm)
        .def_readwrite("D", &distill::DistillConfig::D)
        .def_readwrite("T", &distill::DistillConfig::T)
        .def_readwrite("S", &distill::DistillConfig::S)
        .def("validate", &distill::DistillConfig::validate);

    m.def(
        "total_loss",
        [](const student::StudentParams& p, const Array3& X, const Array3& Y, const Array3& t_y, const Array3& t_h,
           const Matrix& W_r, const Vector& b_r, const distill::DistillConfig& cfg) {
            const auto out = student::forward(p, to_tensor(X));
            return breakdown(distill::total_loss(to_tensor(Y), out, {to_tensor(t_y), to_tensor(t_h)},
                                                 teacher::Regressor{W_r, b_r}, cfg));
        },
        py::arg("student"), py::arg("X"), py::arg("Y"), py::arg("teacher_y"), py::arg("teacher_h"),
        py::arg("W_r"), py::arg("b_r"), py::arg("config"));

    // trainer
    py::class_<trainer::TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("distill", &trainer::TrainConfig::distill)
        .def_readwrite("epochs", &trainer::TrainConfig::epochs)
        .def_readwrite("batch_size", &trainer::TrainConfig::batch_size)
        .def_readwrite("lr", &trainer::TrainConfig::lr)
        .def_readwrite("patience", &trainer::TrainConfig::patience)
        .def_readwrite("kernel", &trainer::TrainConfig::kernel)
        .def_readwrite("seed", &trainer::TrainConfig::seed);

    m.def(
        "train_distill",
        [](const dataio::WindowSet& train, const dataio::WindowSet& val, const dataio::WindowSet& test,
           const Array3& teacher_y, const Array3& teacher_h, const trainer::TrainConfig& cfg,
           const trainer::ProgressFn& progress) {
            trainer::TeacherData t{{to_tensor(teacher_y), to_tensor(teacher_h)}, std::nullopt};
            const auto res = trainer::train_distill({train, val, test}, t, cfg, progress);
            return py::make_tuple(res.params, res.report.to_json(false));
        },
        py::arg("train"), py::arg("val"), py::arg("test"), py::arg("teacher_y"), py::arg("teacher_h"),
        py::arg("config"), py::arg("progress") = trainer::ProgressFn{},
        "Returns (student, report_json) with the best-validation student.");
    m.def(
        "predict",
        [](const student::StudentParams& p, const dataio::WindowSet& w) { return to_array(trainer::predict(p, w)); },
        py::arg("student"), py::arg("windows"));

    m.def(
        "theorem1_suite", [](std::size_t trials, std::uint64_t seed) { return suite(trainer::theorem1_suite(trials, seed)); },
        py::arg("trials") = 10000, py::arg("seed") = 0);
    m.def(
        "theorem2_suite", [](std::size_t trials, std::uint64_t seed) { return suite(trainer::theorem2_suite(trials, seed)); },
        py::arg("trials") = 10000, py::arg("seed") = 0);

    // eval
    m.def(
        "mse", [](const Array3& a, const Array3& b) { return eval::mse(to_tensor(a), to_tensor(b)); }, py::arg("y_hat"),
        py::arg("y"));
    m.def(
        "mae", [](const Array3& a, const Array3& b) { return eval::mae(to_tensor(a), to_tensor(b)); }, py::arg("y_hat"),
        py::arg("y"));
    m.def(
        "per_sample_mse",
        [](const Array3& a, const Array3& b) { return eval::per_sample_mse(to_tensor(a), to_tensor(b)).e; },
        py::arg("y_hat"), py::arg("y"));
    m.def(
        "win_ratio",
        [](std::vector<double> e_s, std::vector<double> e_t) {
            return eval::win_ratio({std::move(e_s), "s"}, {std::move(e_t), "t"});
        },
        py::arg("e_s"), py::arg("e_t"));
    m.def(
        "winners",
        [](std::vector<double> a, std::vector<double> b) { return eval::winners({std::move(a), "a"}, {std::move(b), "b"}); },
        py::arg("a"), py::arg("b"));
    m.def("win_keep", &eval::win_keep, py::arg("u_m"), py::arg("u_t"));
}
