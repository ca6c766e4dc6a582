import math

import numpy as np
import pytest

import timedistill as td


def small_run():
    ds = td.standardize(td.split_standard(td.synth_multiperiod(length=900, channels=2, periods=[12, 24],
                                                               noise_std=0.2, seed=3)))
    sets = [td.WindowSet(ds, s, 48, 16) for s in (td.Split.train, td.Split.val, td.Split.test)]
    return ds, sets


def test_dataset_and_windows():
    ds, (train, val, test) = small_run()
    assert ds.standardized
    assert ds.split_bounds == (630, 720)
    assert len(train) == td.window_count(630, 48, 16) == 567
    X, Y = train.arrays()
    assert X.shape == (567, 48, 2) and Y.shape == (567, 16, 2)
    np.testing.assert_array_equal(X[1, :-1], X[0, 1:])


def test_dft_amplitude_matches_numpy():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((96, 3))
    ref = np.abs(np.fft.fft(x, axis=0))[1:49]
    np.testing.assert_allclose(td.dft_amplitude(x), ref, rtol=1e-10, atol=1e-10)
    q = td.period_distribution(x, 0.5)
    np.testing.assert_allclose(q.sum(axis=0), 1.0, atol=1e-12)


def test_pyramid_levels():
    x = np.arange(8, dtype=float).reshape(8, 1)
    levels = td.build_pyramid(x, 2)
    assert [lv.shape[0] for lv in levels] == [8, 4, 2]
    np.testing.assert_allclose(levels[1][:, 0], [0.5, 2.5, 4.5, 6.5])


def test_student_forward_and_checkpoint(tmp_path):
    p = td.init_student(T=48, S=16, D=8, C=2, kernel=5, seed=1)
    X = np.random.default_rng(1).standard_normal((3, 48, 2))
    y, h = p.forward(X)
    assert y.shape == (3, 16, 2) and h.shape == (3, 8, 2)
    path = tmp_path / "s.tdstu"
    p.save(path)
    q = td.load_student(path)
    np.testing.assert_array_equal(q.forward(X)[0], y)
    path.write_bytes(b"XXXX" + path.read_bytes()[4:])
    with pytest.raises(td.DataError):
        td.load_student(path)


def test_teacher_artifact_round_trip(tmp_path):
    Y = np.random.default_rng(2).standard_normal((5, 16, 2))
    ty, th = td.oracle_noise_teacher(Y, 0.0, D_t=4, seed=0)
    np.testing.assert_array_equal(ty, Y)
    path = tmp_path / "t.tdt"
    td.write_teacher_artifact(path, "test", 48, ty, th)
    meta, y2, h2 = td.load_teacher_artifact(path)
    assert meta["N"] == 5 and meta["D_t"] == 4 and meta["S"] == 16
    np.testing.assert_array_equal(y2, ty.astype(np.float32).astype(float))
    np.testing.assert_array_equal(h2, th.astype(np.float32).astype(float))


def test_loss_identities():
    cfg = td.DistillConfig()
    cfg.T, cfg.S, cfg.D, cfg.M = 48, 16, 8, 2
    p = td.init_student(T=48, S=16, D=8, C=2, kernel=5, seed=4)
    rng = np.random.default_rng(4)
    X, Y = rng.standard_normal((2, 48, 2)), rng.standard_normal((2, 16, 2))
    y, h = p.forward(X)
    same = td.total_loss(p, X, Y, y, h, np.eye(8), np.zeros(8), cfg)
    assert max(abs(same[k]) for k in ("scale_y", "scale_h", "period_y", "period_h")) < 1e-12
    cfg.alpha = cfg.beta = 0.0
    zero = td.total_loss(p, X, Y, rng.standard_normal((2, 16, 2)), rng.standard_normal((2, 6, 2)),
                         np.ones((8, 6)), np.zeros(8), cfg)
    assert zero["total"] == zero["sup"]
    assert zero["sup"] == pytest.approx(td.mse(y, Y), rel=1e-12)


def test_metrics_and_win_analysis():
    a = np.array([[[1.0, 2.0], [3.0, 4.0]]])
    b = np.array([[[0.0, 2.0], [3.0, 6.0]]])
    assert td.mse(b, a) == pytest.approx(1.25)
    assert td.mae(b, a) == pytest.approx(0.75)
    assert td.win_ratio([1.0, 3.0], [2.0, 2.0]) == 0.5
    assert td.win_ratio([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert td.winners([1.0, 3.0, 0.0], [2.0, 2.0, 1.0]) == [0, 2]
    assert td.win_keep([0, 2], [2]) == 0.5


def test_theorem_suites():
    for suite in (td.theorem1_suite(2000, 1), td.theorem2_suite(2000, 1)):
        assert suite["passed"] and suite["min_margin"] >= -1e-9


def test_train_distill_is_deterministic():
    _, (train, val, test) = small_run()
    _, Y = train.arrays()
    ty, th = td.oracle_noise_teacher(Y, 0.2, D_t=8, seed=0)
    cfg = td.TrainConfig()
    cfg.distill.T, cfg.distill.S, cfg.distill.D, cfg.distill.M = 48, 16, 16, 2
    cfg.epochs, cfg.kernel, cfg.seed = 2, 5, 7
    lines = []
    s1, r1 = td.train_distill(train, val, test, ty, th, cfg, lines.append)
    s2, r2 = td.train_distill(train, val, test, ty, th, cfg)
    assert r1 == r2 and len(lines) == 2
    pred = td.predict(s1, test)
    _, Yt = test.arrays()
    import json
    assert math.isclose(td.mse(pred, Yt), json.loads(r1)["test_mse"], rel_tol=1e-12)


def test_errors_map_to_python_exceptions():
    with pytest.raises(ValueError):
        td.init_student(T=48, S=16, D=8, C=2, kernel=4)
    with pytest.raises(td.UsageError):
        td.window_count(10, 48, 16)
