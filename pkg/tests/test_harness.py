import math

import numpy as np
import pytest

from spdehmm.amplitude import burgers_homog_coeffs, limit_coeffs
from spdehmm.direct import Trajectory, run_amplitude_em
from spdehmm.harness import (
    ConvergenceRow,
    ConvergenceTable,
    CoupledRun,
    convergence_sweep,
    coupled_run,
    error_metrics,
    trajectory_compare,
    truncated_coeffs,
)
from spdehmm.hmm import HmmParams
from spdehmm.sde import RngStream
from spdehmm.spectral import burgers_model, custom_model


def _fake_run(c, ci, offset=0.0, n=10):
    dW = 0.3 * RngStream(0, "test").normal(n)
    Xh = run_amplitude_em(c, 0.5, 0.1, dW)
    Xi = run_amplitude_em(ci, 0.5, 0.1, dW)
    traj = Trajectory(0.1 * np.arange(n + 1), {"X_hmm": Xh, "X_hom": Xh, "X_inf": Xi})
    return CoupledRun(traj, c.drift(Xh[:n]) + offset, c.diffusion(Xh[:n]), np.zeros(n, bool), c, ci, dW)


def test_metrics_zero_on_exact_estimates():
    c = burgers_homog_coeffs(1.0, 0.0, 2)
    Ep, Elp = error_metrics(_fake_run(c, c))
    assert Ep == 0.0 and Elp == 0.0


def test_metric_linear_in_drift_offset():
    c = burgers_homog_coeffs(1.0, 0.0, 2)
    Ep, _ = error_metrics(_fake_run(c, c, offset=0.013))
    assert Ep == pytest.approx(0.013, abs=1e-15)


def test_metric_grid_mismatch():
    c = burgers_homog_coeffs(1.0, 0.0, 2)
    run = _fake_run(c, c)
    run.abar = run.abar[:5]
    with pytest.raises(ValueError, match="grid"):
        error_metrics(run)


def test_mixed_metric_differs_only_in_diffusion_point():
    c, ci = burgers_homog_coeffs(1.0, 0.0, 2), burgers_homog_coeffs(1.0)
    run = _fake_run(c, ci)
    _, Elp = error_metrics(run)
    _, Elp_mixed = error_metrics(run, mixed=True)
    s = run.trajectory.series
    n = len(run.abar)
    want = np.mean(np.abs(run.abar - ci.drift(s["X_inf"][:n])) + np.abs(run.sigbar - ci.diffusion(s["X_hom"][:n])))
    assert Elp_mixed == pytest.approx(want)
    assert Elp >= 0


def test_shared_path_replay():
    # the three integrators see the same increments: replaying X_hom from dW reproduces it
    model = burgers_model(2)
    run = coupled_run(model, 2, HmmParams.from_p(3), seed=5)
    c = truncated_coeffs(model, 2)
    np.testing.assert_array_equal(run.trajectory.series["X_hom"], run_amplitude_em(c, 0.5, 0.1, run.dW))
    np.testing.assert_array_equal(
        run.trajectory.series["X_inf"], run_amplitude_em(limit_coeffs(model), 0.5, 0.1, run.dW)
    )
    hmm = run.trajectory.series["X_hmm"]
    np.testing.assert_allclose(np.diff(hmm), 0.1 * run.abar + run.sigbar * run.dW, rtol=1e-12, atol=1e-15)


def test_truncated_coeffs_indexing():
    model = burgers_model(3)
    series = truncated_coeffs(model, 2, series_indexing=True)
    assert abs(series.A - 0.003735726834) < 1e-9
    with pytest.raises(ValueError):
        truncated_coeffs(custom_model([2.0], [1.0], []), 1, series_indexing=True)


def test_sweep_statuses_and_csv():
    tab = convergence_sweep(burgers_model(4), 4, [3, 4], n_seeds=2)
    assert [r.status for r in tab.rows] == ["unstable", "ok"]
    lines = tab.to_csv().splitlines()
    assert lines[1] == "p,M,E_p,E_lp,se_Ep,se_Elp,status"
    assert lines[2].startswith("3,4,nan") and lines[2].endswith("unstable")
    with pytest.raises(ValueError):
        convergence_sweep(burgers_model(2), 2, [])


def test_sweep_row_cap_skips_rest():
    tab = convergence_sweep(burgers_model(2), 2, [3, 4], n_seeds=1, row_time_cap=0.0)
    assert [r.status for r in tab.rows] == ["ok", "skipped"]


def test_sweep_worker_count_does_not_change_numbers():
    a = convergence_sweep(burgers_model(2), 2, [3], n_seeds=3, workers=1)
    b = convergence_sweep(burgers_model(2), 2, [3], n_seeds=3, workers=2)
    assert a.to_csv() == b.to_csv()


def test_slope_fit():
    rows = [ConvergenceRow(p, 2, E_p=2.0**-p) for p in range(3, 7)]
    rows.append(ConvergenceRow(1, 2, status="unstable"))
    assert ConvergenceTable(rows).slope() == pytest.approx(-1.0)
    assert math.isnan(ConvergenceTable(rows[:1]).slope())


def test_trajectory_compare_deterministic():
    model = burgers_model(2)
    a = trajectory_compare(model, 2, 3, T=1.0, seed=2)
    b = trajectory_compare(model, 2, 3, T=1.0, seed=2)
    assert a.to_csv() == b.to_csv()
    assert a.columns() == ["X_hmm", "X_hom", "X_inf"]
    assert len(a.times) == 11


def test_hmm_closer_to_hom_as_p_grows():
    model = burgers_model(2)
    dist = {}
    for p in (3, 6):
        d = []
        for seed in range(4):
            tr = trajectory_compare(model, 2, p, T=2.0, seed=seed)
            d.append(np.max(np.abs(tr.series["X_hmm"] - tr.series["X_hom"])))
        dist[p] = np.mean(d)
    assert dist[6] < dist[3]


def test_limit_floor_at_large_p():
    # E_lp cannot drop below the coefficient gap between truncation and limit by much
    model = burgers_model(2)
    c, ci = truncated_coeffs(model, 2), limit_coeffs(model)
    tab = convergence_sweep(model, 2, [6], n_seeds=4)
    r = tab.rows[0]
    gap_at_x = abs(c.drift(0.5) - ci.drift(0.5))
    assert r.E_lp > 0.5 * gap_at_x
    assert r.E_lp >= r.E_p - (abs(c.A - ci.A) * 2 + abs(math.sqrt(c.C) - math.sqrt(ci.C)) + 3 * r.se_Ep)
