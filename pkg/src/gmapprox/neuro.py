"""A neuron embedded in a feed-forward layer of leaky integrate-and-fire inputs.

Each of the M input neurons evolves as an independent LIF diffusion; its
first threshold crossing triggers an exponentially decaying current into the
embedded neuron, whose membrane potential therefore solves a linear SDE with
a shot-noise drift. The module provides the first-passage simulation, the
response moment curves phi and psi for exponential and Gamma firing-time
laws, the closed-form mean-square approximant for the exponential case, and
the three-scenario cost table (exponential, Gamma, fully simulated network).

Units are milliseconds and millivolts throughout.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.signal import lfilter

from . import approx as approx_mod
from . import drift as drift_mod
from .costs import P_ORDERS, CostReport, per_path_cost_matrix
from .response import lower_incomplete_gamma, response_moment_curves
from .timebase import (
    Curve,
    TimeGrid,
    child_seed,
    derive_stream,
    fill_rows,
    split_stream,
    stable_exp_diff,
)

__all__ = [
    "LIFNeuron",
    "EmbeddedNeuronModel",
    "AnalyticFiring",
    "SimulatedFiring",
    "NetworkRealization",
    "CENSORED",
    "first_passage_time",
    "phi_psi",
    "lower_incomplete_gamma",
    "build_drift_from_network",
    "v2_exponential",
    "run_table2",
    "TABLE2_PARAMS",
]

log = logging.getLogger(__name__)

CENSORED = math.inf  # distinguished outcome: no threshold crossing before the cap

# The cost horizon is five membrane time constants (T = 5/theta = 50 ms).
# A shorter horizon cannot produce the reference costs: for any error
# process, (int_0^T E e^2)^2 <= T int_0^T E e^4, and the reference pair
# (26.8471, 61.20081) forces T >= 11.8 ms; at 50 ms both the exponential
# and Gamma reference rows are reproduced to well within Monte Carlo noise.
TABLE2_PARAMS = {
    "theta": 0.1,  # ms^-1
    "sigma": 1.0,  # mV ms^-1/2
    "v0": 0.0,  # mV
    "response_rate": 1.0,  # ms^-1
    "firing_rate": 1.0 / 15.0,  # ms^-1
    "gamma_shape": 2.0,
    "M": 10,
    "beta_lo": 0.5,  # mV
    "beta_hi": 1.5,  # mV
    "mu_i": 6.0,  # mV ms^-1
    "sigma_i": 1.0,  # mV ms^-1/2
    "theta_i": 0.1,  # ms^-1
    "v0_i": 0.0,  # mV
    "v_th": 20.0,  # mV
    "T": 50.0,  # ms
    "dt": 1e-2,  # ms
    "horizon_cap": 100.0,  # ms
}

_FPT_BLOCK = 2048  # steps simulated per draw block in the first-passage loop


@dataclass(frozen=True)
class LIFNeuron:
    """Leaky integrate-and-fire input neuron dV = (-theta_i V + mu_i) dt + sigma_i dW."""

    theta_i: float
    mu_i: float
    sigma_i: float
    v0_i: float
    v_th: float

    def __post_init__(self):
        if self.theta_i <= 0:
            raise ValueError(f"theta_i must be positive, got {self.theta_i}")
        if self.sigma_i < 0:
            raise ValueError(f"sigma_i must be nonnegative, got {self.sigma_i}")
        if not self.v_th > self.v0_i:
            raise ValueError("firing threshold must exceed the initial potential")


@dataclass(frozen=True)
class AnalyticFiring:
    """Firing times drawn directly from a given positive distribution."""

    dist: drift_mod.Distribution


@dataclass(frozen=True)
class SimulatedFiring:
    """Firing times from first-passage simulation of identical LIF inputs."""

    neuron: LIFNeuron
    sim_dt: float = 1e-2
    horizon_cap: float = 100.0

    def __post_init__(self):
        if self.sim_dt <= 0 or self.horizon_cap <= 0:
            raise ValueError("sim_dt and horizon_cap must be positive")


@dataclass(frozen=True)
class EmbeddedNeuronModel:
    """The embedded neuron: shot-noise drift from M input firings."""

    theta: float
    sigma: float
    v0: float
    response_rate: float
    amplitude: drift_mod.Distribution
    M: int
    firing: Union[AnalyticFiring, SimulatedFiring]

    def __post_init__(self):
        if self.theta <= 0:
            raise ValueError(f"theta must be positive, got {self.theta}")
        if self.M < 1:
            raise ValueError(f"M must be >= 1, got {self.M}")
        if abs(self.response_rate - self.theta) <= 1e-12 * max(self.response_rate, self.theta):
            raise drift_mod.PairingError(
                f"response rate {self.response_rate} must differ from theta {self.theta}"
            )


def first_passage_time(
    neuron: LIFNeuron, dt: float, horizon_cap: float, stream: np.random.Generator
) -> float:
    """First time the Euler-Maruyama LIF path reaches the firing threshold.

    The crossing time is interpolated linearly inside the crossing step.
    Returns CENSORED (= inf) if no crossing occurs before horizon_cap.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    n_total = int(math.ceil(horizon_cap / dt))
    a = 1.0 - neuron.theta_i * dt
    mu_dt = neuron.mu_i * dt
    s = neuron.sigma_i * math.sqrt(dt)
    v_prev = neuron.v0_i
    done = 0
    while done < n_total:
        block = min(_FPT_BLOCK, n_total - done)
        x = np.full(block, mu_dt)
        if neuron.sigma_i > 0:
            x += s * stream.standard_normal(block)
        path, _ = lfilter([1.0], [1.0, -a], x, zi=np.array([a * v_prev]))
        hits = np.nonzero(path >= neuron.v_th)[0]
        if hits.size:
            k = int(hits[0])
            v_before = v_prev if k == 0 else path[k - 1]
            frac = (neuron.v_th - v_before) / (path[k] - v_before)
            return (done + k + frac) * dt
        v_prev = float(path[-1])
        done += block
    return CENSORED


def phi_psi(
    dist: drift_mod.Distribution, lam: float, grid: TimeGrid
) -> tuple[Curve, Curve]:
    """Response moment curves phi = R * p_T and psi = R^2 * p_T.

    Exponential firing times use the two-rate closed forms; Gamma firing
    times use the incomplete-gamma closed form when its argument is positive
    and a trapezoid convolution of the density otherwise.
    """
    if not isinstance(dist, (drift_mod.Exponential, drift_mod.Gamma)):
        raise ValueError(f"unsupported firing-time distribution: {type(dist).__name__}")
    return response_moment_curves(dist, lam, grid)


@dataclass(frozen=True)
class NetworkRealization:
    """One trial of the input layer: events and the resulting drift curves."""

    firing_times: np.ndarray
    amplitudes: np.ndarray
    z: Curve
    Z: Curve
    n_censored: int


def build_drift_from_network(
    model: EmbeddedNeuronModel, grid: TimeGrid, stream: np.random.Generator
) -> NetworkRealization:
    """Draw one realization of the shot-noise drift the embedded neuron sees.

    Firing times come from the analytic law or from M independent
    first-passage simulations (one derived sub-stream per input neuron);
    inputs that never fire before the cap are dropped from the trial and
    counted. Z is assembled from the per-event closed form
    beta (e^{-lam(t - T)} - e^{-theta(t - T)}) / (theta - lam).
    """
    t = grid.times()
    if isinstance(model.firing, AnalyticFiring):
        taus = np.asarray(drift_mod.sample_dist(model.firing.dist, stream, model.M), dtype=float)
    else:
        spec = model.firing
        streams = split_stream(stream, model.M)
        taus = np.array(
            [
                first_passage_time(spec.neuron, spec.sim_dt, spec.horizon_cap, s)
                for s in streams
            ]
        )
    betas = np.asarray(drift_mod.sample_dist(model.amplitude, stream, model.M), dtype=float)
    fired = np.isfinite(taus)
    n_censored = int(model.M - fired.sum())
    taus_f, betas_f = taus[fired], betas[fired]
    order = np.argsort(taus_f, kind="stable")
    taus_f, betas_f = taus_f[order], betas_f[order]
    live = taus_f <= grid.horizon_T
    z = drift_mod._shot_z_path(taus_f[live], betas_f[live], model.response_rate, t)
    z_acc = drift_mod._shot_kernel_path(
        taus_f[live], betas_f[live], model.response_rate, model.theta, t
    )
    return NetworkRealization(
        firing_times=taus,
        amplitudes=betas,
        z=Curve(grid, z),
        Z=Curve(grid, z_acc),
        n_censored=n_censored,
    )


def v2_exponential(model: EmbeddedNeuronModel, grid: TimeGrid) -> approx_mod.Approximant:
    """Closed-form mean-square approximant for exponential firing times.

    F2(t) = M E[beta] nu/(nu - lam) [ (e^{-lam t} - e^{-theta t})/(theta - lam)
                                      - (e^{-nu t} - e^{-theta t})/(theta - nu) ].
    """
    if not isinstance(model.firing, AnalyticFiring) or not isinstance(
        model.firing.dist, drift_mod.Exponential
    ):
        raise ValueError("v2_exponential needs analytic exponential firing times")
    nu = model.firing.dist.rate
    lam, th = model.response_rate, model.theta
    for bad, nm in ((lam, "response rate"), (th, "theta")):
        if abs(nu - bad) <= 1e-12 * max(nu, bad):
            raise drift_mod.PairingError(f"firing rate {nu} coincides with {nm} {bad}")
    t = grid.times()
    scale = model.M * drift_mod.dist_mean(model.amplitude)
    F = scale * nu / (nu - lam) * (stable_exp_diff(lam, th, t) - stable_exp_diff(nu, th, t))
    phi, _ = response_moment_curves(model.firing.dist, lam, grid)
    f = scale * phi.values
    return approx_mod.Approximant(p=2, F=Curve(grid, F), f=Curve(grid, f), theta=th)


# ---------------------------------------------------------------------------
# the three-scenario experiment

def _network_chunks(model, grid, n_paths, master_seed, threads=1, chunk=256, censored=None):
    """Yield (start, Z block) for network trials; accumulate censor counts."""
    counts = np.zeros(n_paths, dtype=int)

    def build(i):
        real = build_drift_from_network(model, grid, derive_stream(master_seed, i))
        counts[i] = real.n_censored
        return real.Z.values

    for start in range(0, n_paths, chunk):
        stop = min(start + chunk, n_paths)
        block = fill_rows(lambda j: build(start + j), stop - start, grid.n_nodes, threads)
        yield start, block
    if censored is not None:
        censored.append(int(counts.sum()))


def _moments_from_chunks(chunks, grid, n_paths):
    s1 = np.zeros(grid.n_nodes)
    s2 = np.zeros(grid.n_nodes)
    s3 = np.zeros(grid.n_nodes)
    for _, block in chunks:
        s1 += block.sum(axis=0)
        b2 = block * block
        s2 += b2.sum(axis=0)
        s3 += (b2 * block).sum(axis=0)
    m1, m2, m3 = s1 / n_paths, s2 / n_paths, s3 / n_paths
    var1 = np.maximum(s2 - n_paths * m1**2, 0.0) / (n_paths - 1)
    return approx_mod.MomentCurves(
        grid=grid,
        m1=Curve(grid, m1),
        m2=Curve(grid, m2),
        m3=Curve(grid, m3),
        se1=Curve(grid, np.sqrt(var1 / n_paths)),
    )




def table2_models(params: dict = TABLE2_PARAMS):
    """The three Table-2 scenarios as (label, embedded model) pairs."""
    amplitude = drift_mod.Uniform(params["beta_lo"], params["beta_hi"])
    common = dict(
        theta=params["theta"],
        sigma=params["sigma"],
        v0=params["v0"],
        response_rate=params["response_rate"],
        amplitude=amplitude,
        M=params["M"],
    )
    lif = LIFNeuron(
        theta_i=params["theta_i"],
        mu_i=params["mu_i"],
        sigma_i=params["sigma_i"],
        v0_i=params["v0_i"],
        v_th=params["v_th"],
    )
    return [
        (
            "exponential",
            EmbeddedNeuronModel(firing=AnalyticFiring(drift_mod.Exponential(params["firing_rate"])), **common),
        ),
        (
            "gamma",
            EmbeddedNeuronModel(
                firing=AnalyticFiring(
                    drift_mod.Gamma(rate=params["firing_rate"], shape=params["gamma_shape"])
                ),
                **common,
            ),
        ),
        (
            "simulated_network",
            EmbeddedNeuronModel(
                firing=SimulatedFiring(lif, sim_dt=params["dt"], horizon_cap=params["horizon_cap"]),
                **common,
            ),
        ),
    ]


def _as_shot_noise(model: EmbeddedNeuronModel) -> drift_mod.ShotNoise:
    assert isinstance(model.firing, AnalyticFiring)
    return drift_mod.ShotNoise(
        count=drift_mod.FixedCount(model.M),
        amplitude=model.amplitude,
        arrival=model.firing.dist,
        response_rate=model.response_rate,
    )


def run_table2(seed: int, n_paths: int = 10_000, threads: int = 1) -> CostReport:
    """The three-scenario embedded-neuron cost table.

    Exponential and Gamma firing-time scenarios use the shot-noise drift
    machinery with F2 analytic (closed form via phi); the simulated-network
    scenario draws firing times by first-passage simulation and takes F2 as
    the Monte Carlo mean of the fitting ensemble. F4 always comes from Monte
    Carlo moments; all costs are evaluated on independent ensembles.
    """
    params = TABLE2_PARAMS
    grid = TimeGrid.from_step(params["T"], params["dt"])
    theta = params["theta"]
    scenarios = table2_models(params)
    values = np.empty((len(scenarios), 2, 2))
    se = np.empty((len(scenarios), 2, 2))
    gap_se = np.empty((len(scenarios), 2))
    censor_total = 0
    censor_trials = 0
    for k, (label, model) in enumerate(scenarios):
        m_seed = child_seed(seed, k, 0)
        e_seed = child_seed(seed, k, 1)
        assert m_seed != e_seed
        if isinstance(model.firing, AnalyticFiring):
            sn = _as_shot_noise(model)
            moments = drift_mod.moments_Z_mc(sn, theta, grid, n_paths, m_seed, threads)
            if isinstance(model.firing.dist, drift_mod.Exponential):
                F2 = v2_exponential(model, grid).F
            else:
                F2 = approx_mod.F2_analytic(sn, theta, grid).F
            chunks = drift_mod.iter_Z_chunks(sn, theta, grid, n_paths, e_seed, threads)
        else:
            cens = []
            moments = _moments_from_chunks(
                _network_chunks(model, grid, n_paths, m_seed, threads, censored=cens),
                grid,
                n_paths,
            )
            F2 = moments.m1
            chunks = _network_chunks(model, grid, n_paths, e_seed, threads, censored=cens)
            censor_trials += 2 * n_paths * model.M
        F4 = approx_mod.F4_from_moments(moments, theta).F
        values[k], se[k], gap_se[k] = per_path_cost_matrix(
            chunks, (F2.values, F4.values), grid.dt, n_paths
        )
        if isinstance(model.firing, SimulatedFiring):
            censor_total = sum(cens)
            rate = censor_total / censor_trials
            log.info("network censor rate: %d/%d = %.2e", censor_total, censor_trials, rate)
    echo = dict(params)
    echo.update(
        {
            "n_paths": n_paths,
            "seed": seed,
            "censored_inputs": censor_total,
            "censor_rate": censor_total / censor_trials if censor_trials else 0.0,
        }
    )
    return CostReport(
        labels=[label for label, _ in scenarios],
        values=values,
        se=se,
        gap_se=gap_se,
        config_echo=echo,
    )
