"""
Self-checks behind ``nested-ising verify`` and the acceptance tests.

Each check runs one property or trend at a stated tolerance and returns a
:class:`CheckResult` with the observed and expected values, so a failure
report says how far off it was rather than just that it failed.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .engine import (
    SIGMA_X,
    StateVector,
    compile_model,
    dense_floquet_matrix,
    evolve,
    haar_random_state,
    kick_matrix,
    product_state,
)
from .experiments import (
    RunSpec,
    concurrence_decay,
    cp_trajectory,
    far_coupling_control,
    far_free_trajectory,
    gamma_sweep,
    lambda_sweep,
    nu_scaling,
    purity_decay,
    trajectory,
)
from .measures import (
    PHI_PLUS_DM,
    concurrence,
    dephased_bell_state,
    purity,
    reduced_density,
    sigma_z_expectation,
    werner_state,
)
from .model import (
    KickField,
    ModelConfig,
    QubitLayout,
    build_preset,
    default_fields,
)
from .rng import stream

FULL_LAYOUT = QubitLayout(1, 6, 10)
DESK_LAYOUT = QubitLayout(1, 4, 6)
SPECTATOR_LAYOUT = QubitLayout(2, 6, 10)
TREND_GAMMAS = (0.05, 0.1, 0.3, 0.6)


@dataclass
class CheckResult:
    name: str
    passed: bool
    observed: str
    expected: str
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status}  {self.name}: observed {self.observed}; "
                f"expected {self.expected} [{self.seconds:.1f} s]")


def _timed(name: str, fn: Callable[[], tuple[bool, str, str]]) -> CheckResult:
    started = time.perf_counter()
    passed, observed, expected = fn()
    return CheckResult(name, bool(passed), observed, expected,
                       time.perf_counter() - started)


def baseline_spec(layout: QubitLayout = FULL_LAYOUT, t_max: int = 1000,
                  record_times=None, n_realizations: int = 10, lam: float = 0.01,
                  gamma: float = 0.5) -> RunSpec:
    cfg = build_preset("baseline-chain", layout, J=1.0, lam=lam, gamma=gamma)
    return RunSpec(cfg, t_max=t_max, record_times=record_times or (t_max,),
                   n_realizations=n_realizations)


def spectator_spec(t_max: int, record_step: int, n_realizations: int = 10,
                   beta: float = 1.0, layout: QubitLayout = SPECTATOR_LAYOUT) -> RunSpec:
    cfg = build_preset("spectator", layout, J=1.0, lam=0.01, gamma=0.5,
                       fields=default_fields(KickField.tilted(beta)))
    return RunSpec(cfg, t_max=t_max, record_times=range(0, t_max + 1, record_step),
                   n_realizations=n_realizations, central_init="bell_phi_plus")


# --- oracle ------------------------------------------------------------------

def random_oracle_config(seed: int, layout: QubitLayout = QubitLayout(1, 3, 4)) -> ModelConfig:
    """Random couplings of every kind plus random fields on an 8-qubit layout."""
    rng = stream(seed, "oracle-config")
    near, far = list(layout.near), list(layout.far)

    def pick(pairs, size):
        idx = rng.choice(len(pairs), size=size, replace=False)
        return [pairs[i] for i in sorted(idx)]

    intra_pairs = ([(a, b) for i, a in enumerate(near) for b in near[i + 1:]]
                   + [(a, b) for i, a in enumerate(far) for b in far[i + 1:]])
    intra = [(j, k, float(rng.uniform(0.5, 1.5))) for j, k in pick(intra_pairs, 6)]
    ce = pick([(0, e) for e in near], 2)
    eep = pick([(e, f) for e in near for f in far], 3)
    cep = [(0, far[-1], float(rng.uniform(-0.1, 0.1)))]
    fields = {name: KickField(*rng.uniform(-1.5, 1.5, size=3)) for name in ("c", "e", "ep")}
    J, lam, gamma = rng.uniform(-2.0, 2.0, size=3)
    return ModelConfig(layout, intra, ce, eep, cep, float(J), float(lam), float(gamma), fields)


def check_oracle(n_configs: int = 5, steps: int = 50, tol: float = 1e-11,
                 flip_order: bool = False) -> CheckResult:
    """Fast engine against dense Floquet matrices at n = 8."""
    def run():
        worst = 0.0
        for seed in range(n_configs):
            model = compile_model(random_oracle_config(seed), allow_negative=True)
            psi = haar_random_state(model.n, stream(seed, "oracle-state"))
            u = dense_floquet_matrix(model)
            ref = psi.amplitudes.copy()
            for _ in range(steps):
                ref = u @ ref
            evolve(psi, model, steps, _kick_first=flip_order)
            worst = max(worst, float(np.max(np.abs(psi.amplitudes - ref))))
        return worst <= tol, f"max amplitude error {worst:.3e}", f"<= {tol:g}"
    return _timed("oracle-equivalence", run)


def check_measure_examples(tol: float = 1e-10) -> CheckResult:
    """Closed-form purity, concurrence and sigma_z values."""
    def run():
        v = np.array([0.6, 0.8j])
        cases = [
            ("purity(pure)", purity(np.outer(v, v.conj())), 1.0),
            ("purity(I/2)", purity(np.eye(2) / 2), 0.5),
            ("purity(diag(.75,.25))", purity(np.diag([0.75, 0.25])), 0.625),
            ("C(Bell)", concurrence(PHI_PLUS_DM), 1.0),
            ("C(|00>)", concurrence(np.diag([1.0, 0, 0, 0])), 0.0),
            ("C(Werner 0.8)", concurrence(werner_state(0.8)), 0.7),
            ("C(Werner 1/3)", concurrence(werner_state(1 / 3)), 0.0),
            ("P(Werner 1/3)", purity(werner_state(1 / 3)), 1 / 3),
            ("P(dephased 0.5)", purity(dephased_bell_state(0.5)), 0.625),
            ("C(dephased 0.5)", concurrence(dephased_bell_state(0.5)), 0.5),
            ("<sz>(|0>)", sigma_z_expectation(np.diag([1.0, 0.0])), 1.0),
            ("<sz>(|+>)", sigma_z_expectation(np.full((2, 2), 0.5)), 0.0),
        ]
        devs = {name: abs(got - want) for name, got, want in cases}
        kick = float(np.max(np.abs(kick_matrix((math.pi / 2, 0, 0)) + 1j * SIGMA_X)))
        devs["kick(pi/2 x)"] = kick
        worst = max(devs, key=devs.get)
        bad = [name for name, d in devs.items() if d > tol]
        observed = f"{len(devs) - len(bad)}/{len(devs)} within tolerance, worst {worst} off by {devs[worst]:.1e}"
        return not bad, observed, f"all within {tol:g}"
    return _timed("measure-examples", run)


# --- invariants ----------------------------------------------------------------

def check_unitarity(steps: int = 4000, tol: float = 1e-9) -> CheckResult:
    def run():
        model = compile_model(baseline_spec().config)
        psi = haar_random_state(model.n, stream(0, "unitarity"))
        evolve(psi, model, steps)
        dev = abs(psi.norm() - 1.0)
        return dev <= tol, f"|norm - 1| = {dev:.2e} after {steps} steps at n = {model.n}", f"<= {tol:g}"
    return _timed("unitarity", run)


def check_periodicity(gamma: float = 0.3, tol: float = 1e-10) -> CheckResult:
    def run():
        spec = baseline_spec(DESK_LAYOUT, 1000, range(0, 1001, 100), n_realizations=1)
        a = trajectory(spec, spec.config.with_(gamma=gamma), 0).observables()["purity"]
        b = trajectory(spec, spec.config.with_(gamma=gamma + math.pi), 0).observables()["purity"]
        dev = float(np.max(np.abs(a - b)))
        return dev <= tol, f"max |dP| = {dev:.2e}", f"<= {tol:g}"
    return _timed("gamma-periodicity", run)


def check_dephasing_conservation(steps: int = 1000, tol: float = 1e-10) -> CheckResult:
    def run():
        model = compile_model(baseline_spec(DESK_LAYOUT).config)
        rng = stream(0, "dephasing")
        central = StateVector(np.array([math.cos(0.4), math.sin(0.4) * np.exp(0.3j)]))
        psi = product_state([central, haar_random_state(DESK_LAYOUT.n_e, rng),
                             haar_random_state(DESK_LAYOUT.n_ep, rng)])
        z0 = sigma_z_expectation(reduced_density(psi, 1))
        worst = 0.0
        for _ in range(steps // 50):
            evolve(psi, model, 50)
            worst = max(worst, abs(sigma_z_expectation(reduced_density(psi, 1)) - z0))
        return worst <= tol, f"max |d<sz>| = {worst:.2e}", f"<= {tol:g}"
    return _timed("dephasing-conservation", run)


def check_far_decoupling(tol: float = 1e-12) -> CheckResult:
    def run():
        spec = baseline_spec(FULL_LAYOUT, 1000, range(0, 1001, 100), n_realizations=2)
        cfg = spec.config.with_(gamma=0.0)
        worst = 0.0
        for r in range(spec.n_realizations):
            full = trajectory(spec, cfg, r).rhos
            ref = far_free_trajectory(spec, cfg, r).rhos
            worst = max(worst, max(float(np.max(np.abs(a - b))) for a, b in zip(full, ref)))
        return worst <= tol, f"max |d rho| = {worst:.2e}", f"<= {tol:g}"
    return _timed("far-decoupling", run)


def check_determinism() -> CheckResult:
    def run():
        spec = baseline_spec(DESK_LAYOUT, 200, (0, 100, 200), n_realizations=4)
        a = purity_decay(spec, [0.1, 0.5]).to_csv()
        b = purity_decay(spec, [0.1, 0.5]).to_csv()
        c = purity_decay(spec.with_(threads=3), [0.1, 0.5]).to_csv()
        same = a == b == c
        return same, "identical CSV bytes" if same else "CSV bytes differ", "identical across runs and thread counts"
    return _timed("determinism", run)


# --- trends --------------------------------------------------------------------

def check_purity_trend(layout: QubitLayout = FULL_LAYOUT, n_realizations: int = 10,
                       min_gap: float | None = 0.05) -> CheckResult:
    """Mean purity at t = 1000 strictly increasing in gamma."""
    def run():
        spec = baseline_spec(layout, 1000, n_realizations=n_realizations)
        res = gamma_sweep(spec, 1000, TREND_GAMMAS)
        p = [row["purity"] for row in res.means()]
        increasing = all(a < b for a, b in zip(p, p[1:]))
        ok = increasing and (min_gap is None or p[-1] - p[0] >= min_gap)
        expected = "strictly increasing" + (f", P(0.6) - P(0.05) >= {min_gap}" if min_gap else "")
        return ok, "P = " + ", ".join(f"{x:.4f}" for x in p), expected
    label = "purity-trend" if layout == FULL_LAYOUT else "purity-trend-desk"
    return _timed(label, run)


def check_lambda_law(lo: float = 1.7, hi: float = 2.3) -> CheckResult:
    def run():
        spec = baseline_spec(FULL_LAYOUT, 200)
        res = lambda_sweep(spec, [0.002, 0.005, 0.01, 0.02], [0.5], t_fix=200)
        slope = res.metadata["slopes"]["0.5"]
        return lo <= slope <= hi, f"slope {slope:.3f}", f"in [{lo}, {hi}]"
    return _timed("lambda-squared-law", run)


def check_gamma_prime_collapse(gamma_prime: float = math.pi / 4, tol: float = 0.05,
                               topology_seed: int = 0) -> CheckResult:
    """Every link carries gamma'; the collapse only holds once gamma' sits on
    the purity plateau, hence the default pi/4."""
    def run():
        spec = baseline_spec(FULL_LAYOUT, 1000)
        res = nu_scaling(spec, [1, 2, 4], gamma_prime, topology_seed=topology_seed)
        p = [row["purity"] for row in res.means()]
        spread = max(p) - min(p)
        observed = f"P = {', '.join(f'{x:.4f}' for x in p)}, spread {spread:.4f}"
        return spread <= tol, observed, f"spread <= {tol}"
    return _timed("gamma-prime-collapse", run)


def check_sudden_death(t_max: int = 4000, record_step: int = 10) -> CheckResult:
    """Bell pair in the spectator layout: concurrence of the realization mean
    must hit zero before ``t_max`` for both gammas, later for the larger one."""
    def run():
        spec = spectator_spec(t_max, record_step)
        res = concurrence_decay(spec, [0.05, 0.5])
        deaths = {g: v["mean_curve"] for g, v in res.metadata["sudden_death"].items()}
        t_small, t_large = deaths["0.05"], deaths["0.5"]
        ok = (t_small is not None and t_large is not None and t_large > t_small)
        fmt = lambda t: "none" if t is None else str(t)
        observed = f"death at t = {fmt(t_small)} (gamma 0.05), {fmt(t_large)} (gamma 0.5)"
        return ok, observed, f"both finite <= {t_max}, gamma 0.5 later"
    return _timed("sudden-death", run)


def check_unital_region(min_fraction: float = 0.99, tol: float = 0.02,
                        t_max: int = 4000) -> CheckResult:
    def run():
        spec = spectator_spec(t_max, 20, n_realizations=5)
        out = cp_trajectory(spec, [0.05, 0.5], tol=tol)
        frac = out.unital_fraction
        return frac >= min_fraction, f"fraction inside {frac:.4f}", f">= {min_fraction}"
    return _timed("unital-region", run)


def check_far_coupling(tol: float = 0.01) -> CheckResult:
    def run():
        spec = baseline_spec(FULL_LAYOUT, 1000, range(0, 1001, 100))
        diff = far_coupling_control(spec, 0.01).max_abs_diff
        return diff <= tol, f"max |dP| = {diff:.2e}", f"<= {tol}"
    return _timed("far-coupling-control", run)


QUICK = (check_oracle, check_measure_examples)
FULL = QUICK + (
    check_unitarity,
    check_purity_trend,
    lambda: check_purity_trend(DESK_LAYOUT, min_gap=None),
    check_periodicity,
    check_dephasing_conservation,
    check_far_decoupling,
    check_lambda_law,
    check_gamma_prime_collapse,
    check_sudden_death,
    check_unital_region,
    check_far_coupling,
    check_determinism,
)
