import itertools

import numpy as np
import pytest

from afem2d import (MarkingConfig, adaptive_loop, affine_problem,
                    contraction_diagnostic, lshape_problem, mark_doerfler,
                    mark_modified, rate_fit, zshape_problem)
from afem2d.adapt import ConfigError, LoopRecord, RateFitError


def test_mark_doerfler_simple_cases():
    # one dominant indicator suffices for theta = 0.5
    assert mark_doerfler([10.0, 1.0, 1.0], 0.5).tolist() == [0]
    # equal indicators: theta = 0.5 needs exactly half
    assert len(mark_doerfler([1.0, 1.0, 1.0, 1.0], 0.5)) == 2
    # zero total: nothing to mark
    assert len(mark_doerfler([0.0, 0.0], 0.5)) == 0
    # returned ids are sorted ascending
    got = mark_doerfler([1.0, 5.0, 2.0, 4.0], 0.7)
    assert np.all(np.diff(got) > 0)
    with pytest.raises(ConfigError):
        mark_doerfler([1.0], 0.0)
    with pytest.raises(ConfigError):
        mark_doerfler([1.0], 1.0)


def test_mark_doerfler_ties_broken_by_ascending_id():
    got = mark_doerfler([3.0, 3.0, 3.0], 0.4)
    assert got.tolist() == [0, 1]


def _brute_minimum(ind, theta):
    total = ind.sum()
    if total <= 0:
        return 0
    for k in range(len(ind) + 1):
        for subset in itertools.combinations(range(len(ind)), k):
            if ind[list(subset)].sum() >= theta * total:
                return k
    return len(ind)


def test_mark_doerfler_minimal_cardinality_smoke(rng):
    for _ in range(50):
        n = int(rng.integers(1, 10))
        ind = rng.random(n) ** 2
        theta = float(rng.random() * 0.98 + 0.01)
        assert len(mark_doerfler(ind, theta)) == _brute_minimum(ind, theta)


def test_mark_modified_branches():
    eta = np.array([4.0, 1.0])
    osc = np.array([0.1, 0.1])
    ids, branch = mark_modified(eta, osc, 0.5, 0.5, 0.5)
    assert branch == "jump"
    assert ids.tolist() == [0]
    ids, branch = mark_modified(eta, 10.0 * eta, 0.5, 0.5, 0.5)
    assert branch == "oscillation"
    with pytest.raises(ConfigError):
        mark_modified(eta, osc, 0.5, 0.5, 0.0)


def test_marking_config_validation():
    MarkingConfig("doerfler", theta=0.3).validate()
    with pytest.raises(ConfigError):
        MarkingConfig("doerfler", theta=1.5).validate()
    with pytest.raises(ConfigError):
        MarkingConfig("newest").validate()
    with pytest.raises(ConfigError):
        MarkingConfig("modified", theta1=0.0).validate()


def test_affine_run_stops_immediately():
    res = adaptive_loop(affine_problem(), MarkingConfig("doerfler"))
    assert len(res.records) == 1
    assert res.records[0].varrho_sq < 1e-20
    assert res.final_mesh.n_triangles == 2


def test_uniform_counts():
    res = adaptive_loop(zshape_problem(), MarkingConfig("uniform"),
                        max_levels=4, max_elements=10 ** 9,
                        compute_error=False)
    assert [r.n_triangles for r in res.records] == [7, 28, 112, 448]
    assert all(r.branch in ("uniform", "-") for r in res.records)


def test_zshape_adaptive_run_record_invariants():
    res = adaptive_loop(zshape_problem(), MarkingConfig("doerfler", theta=0.5),
                        max_elements=10 ** 4, max_levels=40)
    recs = res.records
    assert 10 <= len(recs) <= 22
    sizes = [r.n_triangles for r in recs]
    assert all(b > a for a, b in zip(sizes, sizes[1:]))
    for r in recs:
        assert r.varrho_sq >= 0 and r.osc_sq >= 0 and r.eta_sq >= 0
        assert r.solver_iterations >= 0
    # estimator strictly decreasing from level 2 on
    v = [r.varrho_sq for r in recs]
    assert all(b < a for a, b in zip(v[2:], v[3:]))
    # energy error available and decreasing overall
    assert recs[-1].energy_error < recs[0].energy_error


def test_history_and_closure_tracking():
    res = adaptive_loop(zshape_problem(), MarkingConfig("doerfler", theta=0.5),
                        max_elements=300, keep_history=True,
                        compute_error=False)
    assert len(res.history) == len(res.records)
    assert len(res.closure_history) == len(res.records)
    mesh0, _, _, _, marked0 = res.history[0]
    assert mesh0.n_triangles == 7
    assert len(marked0) == res.records[0].n_marked


def test_contraction_diagnostic():
    res = adaptive_loop(zshape_problem(), MarkingConfig("doerfler", theta=0.5),
                        max_elements=2000)
    diag = contraction_diagnostic(res.records, lam=1.0, gamma=1.0)
    assert len(diag) == len(res.records) - 1
    assert all(k is None or k > 0 for _, k in diag)
    # without an exact solution the diagnostic is unavailable
    res_l = adaptive_loop(lshape_problem(), MarkingConfig("doerfler"),
                          max_elements=100)
    assert contraction_diagnostic(res_l.records) is None


def _fake_records(ns, values):
    return [LoopRecord(level=i, n_triangles=n, n_vertices=0, n_marked=0,
                       branch="-", varrho_sq=v ** 2, eta_sq=0.0,
                       eta_jump_sq=0.0, eta_neumann_sq=0.0, osc_sq=0.0,
                       osc_dirichlet_sq=0.0, osc_neumann_sq=0.0,
                       varrho_ext_sq=0.0, rho_sq=0.0, energy_error=None,
                       solver_iterations=0, solver_residual=0.0)
            for i, (n, v) in enumerate(zip(ns, values))]


def test_rate_fit_recovers_power_law():
    ns = [10, 40, 160, 640, 2560]
    vals = [n ** -0.5 for n in ns]
    recs = _fake_records(ns, vals)
    assert rate_fit(recs, "varrho") == pytest.approx(-0.5, abs=1e-12)
    with pytest.raises(RateFitError):
        rate_fit(recs[:2], "varrho")
    with pytest.raises(RateFitError):
        rate_fit(recs, "error")  # all None


def test_invalid_loop_arguments():
    with pytest.raises(ConfigError):
        adaptive_loop(affine_problem(), MarkingConfig("doerfler"),
                      max_elements=0)
    with pytest.raises(ConfigError):
        adaptive_loop(affine_problem(), MarkingConfig("doerfler", theta=2.0))
