"""Acceptance suite: every criterion at its stated tolerance, one line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the PASS/FAIL line
per criterion. The two cost tables are computed once per session (about a
minute together) and shared across criteria.
"""

import numpy as np
import pytest

from gmapprox import drift as dm
from gmapprox.approx import F2_analytic, F4_from_moments, MomentCurves, cubic_el_root, eta2
from gmapprox.bounds import d2_closed, d2_generic, pointwise_mse_streaming
from gmapprox.costs import full_path_costs, run_table1
from gmapprox.neuro import run_table2
from gmapprox.sde import LinearSDE, apply_I, apply_I_inv, ou_drift_cov_kernel, z_variance_quadrature
from gmapprox.timebase import Curve, TimeGrid, child_seed, trapezoid_values

SEED = 42
N_PATHS = 10_000
THETA = 1.5

# reference values (per-scenario columns J2[F2], J2[F4], J4[F2], J4[F4])
TABLE1_REFERENCE = {
    "single_shot": [0.04809342, 0.07091437, 0.005860227, 0.003705015],
    "poisson": [7.268493, 7.437058, 50.80439, 49.55527],
    "compound_poisson": [3.612515, 3.957901, 16.41228, 14.52411],
    "brownian": [3.619208, 3.619208, 12.40195, 12.40195],
    "ornstein_uhlenbeck": [0.1985489, 0.1985489, 0.02649128, 0.02649128],
}
TABLE2_REFERENCE = {
    "exponential": [26.8471, 27.67105, 61.20081, 58.75134],
    "gamma": [26.4166, 27.65103, 52.46327, 49.15484],
    "simulated_network": [4.387099, 4.396086, 4.311031, 4.315560],
}
GAUSSIAN_SCENARIOS = {"brownian", "ornstein_uhlenbeck"}
CELLS = [(2, 2), (2, 4), (4, 2), (4, 4)]  # (p_eval, p_fit) column order


@pytest.fixture(scope="module")
def table1():
    return run_table1(seed=SEED, n_paths=N_PATHS)


@pytest.fixture(scope="module")
def table2():
    return run_table2(seed=SEED, n_paths=N_PATHS)


def _check_table(report, reference, rtol_for):
    failures = []
    for label, refs in reference.items():
        for (p_eval, p_fit), ref in zip(CELLS, refs):
            value, se = report.entry(label, p_eval, p_fit)
            tol = max(rtol_for(label) * ref, 4 * se)
            if abs(value - ref) > tol:
                failures.append(f"{label} J{p_eval}[F{p_fit}]: {value:.6g} vs {ref:.6g}")
    return failures


def test_criterion_1_table1_reproduction(table1):
    failures = _check_table(table1, TABLE1_REFERENCE, lambda label: 0.10)
    worst = max(
        abs(table1.entry(lab, pe, pf)[0] - ref) / ref
        for lab, refs in TABLE1_REFERENCE.items()
        for (pe, pf), ref in zip(CELLS, refs)
    )
    status = "PASS" if not failures else "FAIL"
    print(
        f"\ncriterion 1 {status}: all 20 cost-table entries within max(10%, 4 SE) "
        f"of the reference (worst relative deviation {worst:.2%})"
    )
    assert not failures, failures


def test_criterion_2_gaussian_coincidence(table1):
    failures = []
    for label in GAUSSIAN_SCENARIOS:
        for p in (2, 4):
            diag, _ = table1.entry(label, p, p)
            off, _ = table1.entry(label, p, 6 - p)
            if abs(diag - off) / diag >= 0.01:
                failures.append(f"{label} J{p}: {diag:.6g} vs {off:.6g}")
    # exact Gaussian moment structure forces the order-4 curve onto the mean
    g = TimeGrid.from_step(1.0, 0.01)
    model = dm.OUDrift(rate=2.0, sigma_u=1.0, u0=1.0)
    F2 = F2_analytic(model, THETA, g).F.values
    var = z_variance_quadrature(ou_drift_cov_kernel(model), THETA, g).values
    moments = MomentCurves(
        grid=g,
        m1=Curve(g, F2),
        m2=Curve(g, F2**2 + var),
        m3=Curve(g, F2**3 + 3 * F2 * var),
        se1=Curve(g, np.zeros_like(F2)),
    )
    sup = float(np.max(np.abs(F4_from_moments(moments, THETA).F.values - F2)))
    if sup >= 1e-10:
        failures.append(f"analytic Gaussian moments: sup|F4 - F2| = {sup:.3g}")
    status = "PASS" if not failures else "FAIL"
    print(
        f"\ncriterion 2 {status}: Gaussian rows coincide within 1% and analytic "
        f"Gaussian moments give sup|F4 - F2| = {sup:.2e} < 1e-10"
    )
    assert not failures, failures


def test_criterion_3_optimality(table1, table2):
    failures = []
    strict_misses = []
    for report, reference in ((table1, TABLE1_REFERENCE), (table2, TABLE2_REFERENCE)):
        for label in reference:
            for p in (2, 4):
                gap, gse = report.gap(label, p)
                if gap < -4 * gse:
                    failures.append(f"{label} J{p}: gap {gap:.4g} < -4 se {gse:.4g}")
                if label not in GAUSSIAN_SCENARIOS and gap <= 2 * gse:
                    strict_misses.append(f"{label} J{p}: gap {gap:.4g} vs 2 se {2 * gse:.4g}")
    status = "PASS" if not (failures or strict_misses) else "FAIL"
    print(
        f"\ncriterion 3 {status}: diagonal optimality holds within 4 SE everywhere"
        + (f"; strictness misses: {strict_misses}" if strict_misses else
           " and strictly (> 2 SE of the gap) in every non-Gaussian scenario")
    )
    assert not failures, failures
    assert not strict_misses, strict_misses


def test_criterion_4_pointwise_error_bound():
    grid = TimeGrid.from_step(5.0, 1e-3)
    model = dm.SingleShot(rate=2.0)
    F2 = F2_analytic(model, THETA, grid).F
    chunks = dm.iter_Z_chunks(model, THETA, grid, N_PATHS, child_seed(SEED, 9))
    mse, se = pointwise_mse_streaming(chunks, F2, N_PATHS)
    d2 = d2_closed(model, THETA, grid).d2.values
    assert d2[-1] == pytest.approx(4.479018627510364e-05, rel=1e-9)
    violation = mse.values - d2 - 3 * se.values
    ok = bool(np.all(violation <= 0)) and mse.values[-1] < 1e-3
    print(
        f"\ncriterion 4 {'PASS' if ok else 'FAIL'}: mse <= d2 + 3 se at all "
        f"{grid.n_nodes} nodes (max margin violation {violation.max():.3g}), "
        f"mse(5) = {mse.values[-1]:.3g} < 1e-3"
    )
    assert np.all(violation <= 0)
    assert mse.values[-1] < 1e-3


def test_criterion_5_table2_reproduction(table2):
    failures = _check_table(
        table2,
        TABLE2_REFERENCE,
        lambda label: 0.15 if label == "simulated_network" else 0.10,
    )
    worst = max(
        abs(table2.entry(lab, pe, pf)[0] - ref) / ref
        for lab, refs in TABLE2_REFERENCE.items()
        for (pe, pf), ref in zip(CELLS, refs)
    )
    status = "PASS" if not failures else "FAIL"
    print(
        f"\ncriterion 5 {status}: all 12 embedded-neuron entries within tolerance "
        f"(worst relative deviation {worst:.2%}; censor rate "
        f"{table2.config_echo['censor_rate']:.2e})"
    )
    assert not failures, failures


def test_criterion_6_property_suite():
    checks = {}

    # moment consistency: m2 >= m1^2 at every node
    g1 = TimeGrid.from_step(1.0, 0.02)
    models = [
        dm.SingleShot(2.0),
        dm.Poisson(2.0),
        dm.CompoundPoisson(2.0, dm.Exponential(2.0)),
        dm.ShotNoise(),
        dm.BrownianDrift(2.0),
        dm.OUDrift(2.0, 1.0, 1.0),
    ]
    checks["moment consistency"] = all(
        np.all(m.m2.values - m.m1.values**2 >= -1e-12)
        for m in (dm.moments_Z_mc(mod, THETA, g1, 400, child_seed(SEED, 20, i)) for i, mod in enumerate(models))
    )

    # cubic root: uniqueness bracket, monotone residual, scale equivariance to 1e-10
    m1, var, mu3 = 0.4, 0.3, 0.2
    base = cubic_el_root(m1, m1**2 + var, m1**3 + 3 * m1 * var + mu3)
    equi = all(
        abs(cubic_el_root(c * m1, c**2 * (m1**2 + var), c**3 * (m1**3 + 3 * m1 * var + mu3)) - c * base)
        <= 1e-10 * max(1.0, abs(c * base))
        for c in (0.5, 3.0, 17.0)
    )
    h = lambda x: (x - m1) ** 3 + 3 * var * (x - m1) - mu3
    checks["cubic root"] = equi and h(base - 1e-6) < 0 < h(base + 1e-6) and abs(h(base)) < 1e-9

    # I / I^-1 round trip within 1e-4 sup norm at dt = 1e-3
    g2 = TimeGrid.from_step(1.0, 1e-3)
    f = Curve.from_function(g2, lambda t: -np.expm1(-2 * t))
    back = apply_I_inv(apply_I(f, THETA), THETA)
    checks["I round trip"] = float(np.max(np.abs(back.values - f.values))) < 1e-4

    # F2' = eta2 within 1e-4 sup norm
    F2 = F2_analytic(dm.SingleShot(2.0), THETA, g2).F.values
    dF = np.gradient(F2, g2.dt, edge_order=2)
    checks["F2 derivative identity"] = float(
        np.max(np.abs(dF - eta2(dm.SingleShot(2.0), THETA, g2).values))
    ) < 1e-4

    # d2 generic vs closed within 1e-5 for every variant
    checks["d2 generic = closed"] = all(
        np.max(np.abs(d2_generic(m, THETA, g2).d2.values - d2_closed(m, THETA, g2).d2.values)) < 1e-5
        for m in models[:3] + models[4:]
    ) and np.max(
        np.abs(
            d2_generic(dm.ShotNoise(), 0.1, TimeGrid.from_step(10.0, 1e-3)).d2.values
            - d2_closed(dm.ShotNoise(), 0.1, TimeGrid.from_step(10.0, 1e-3)).d2.values
        )
    ) < 1e-5

    # estimator equivalence to 1e-10 per path
    g3 = TimeGrid.from_step(5.0, 1e-2)
    sde = LinearSDE(theta=THETA, sigma=1.0, x0=0.0, grid=g3)
    model = dm.SingleShot(2.0)
    F = F2_analytic(model, THETA, g3).F
    full = full_path_costs(sde, model, F, 2, 10, child_seed(SEED, 21))
    ens = dm.Z_path_ensemble(model, THETA, g3, 10, child_seed(SEED, 21))
    direct = trapezoid_values(np.abs(ens.values - F.values[None, :]) ** 2, g3.dt)
    checks["estimator equivalence"] = float(np.max(np.abs(full - direct))) < 1e-10

    # bit-exact reproducibility across thread counts
    a = dm.Z_path_ensemble(model, THETA, g3, 100, child_seed(SEED, 22), threads=1)
    b = dm.Z_path_ensemble(model, THETA, g3, 100, child_seed(SEED, 22), threads=4)
    checks["thread reproducibility"] = np.array_equal(a.values, b.values)

    status = "PASS" if all(checks.values()) else "FAIL"
    detail = ", ".join(f"{k}: {'ok' if v else 'FAIL'}" for k, v in checks.items())
    print(f"\ncriterion 6 {status}: {detail}")
    assert all(checks.values()), checks


def test_criterion_7_growth_classes():
    masses = {}
    quad_models = {
        "poisson": dm.Poisson(2.0),
        "compound_poisson": dm.CompoundPoisson(2.0, dm.Exponential(2.0)),
        "brownian": dm.BrownianDrift(2.0),
    }
    for T in (2.5, 5.0, 10.0):
        g = TimeGrid.from_step(T, 1e-3)
        masses[T] = {name: d2_closed(m, THETA, g).l1_mass for name, m in quad_models.items()}
    exponents = {
        name: np.log(masses[10.0][name] / masses[5.0][name]) / np.log(2.0)
        for name in quad_models
    }
    ss5 = d2_closed(dm.SingleShot(2.0), THETA, TimeGrid.from_step(5.0, 1e-3)).l1_mass
    ss10 = d2_closed(dm.SingleShot(2.0), THETA, TimeGrid.from_step(10.0, 1e-3)).l1_mass
    rel_change = abs(ss10 - ss5) / ss10
    ok = all(e <= 2.1 for e in exponents.values()) and rel_change < 0.01
    print(
        f"\ncriterion 7 {'PASS' if ok else 'FAIL'}: largest-scale growth exponents "
        + ", ".join(f"{k} {v:.3f}" for k, v in exponents.items())
        + f" (all <= 2.1); single-shot mass change 5 -> 10: {rel_change:.2e} < 1%"
    )
    assert all(e <= 2.1 for e in exponents.values()), exponents
    assert rel_change < 0.01
