"""
Experiment protocols: purity decay, coupling sweeps, connection-count
scaling, concurrence decay and concurrence-purity trajectories.

Every protocol evolves ``n_realizations`` trajectories per parameter point.
Realization ``r`` draws its two Haar-random environment states (near first,
then far) from ``stream(base_seed, "env", r)``; the stream does not depend on
the parameter point, so all points of a sweep share the same environment
samples and differences between points are not masked by sampling noise.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .engine import (
    CompiledModel,
    StateVector,
    bell_phi_plus,
    compile_model,
    evolve,
    haar_random_state,
    plus_state,
    product_state,
)
from .errors import DegenerateFit, DimensionMismatch, InvalidConfig
from .measures import (
    concurrence,
    dephasing_curve,
    purity,
    reduced_density,
    sigma_z_expectation,
    unital_region_mask,
    werner_curve,
)
from .model import (
    ModelConfig,
    QubitLayout,
    TopologyPreset,
    build_preset,
    random_interlinks,
    with_far_coupling,
)
from .rng import stream

RESULT_SCHEMA_VERSION = 1
SUDDEN_DEATH_THRESHOLD = 1e-12
CENTRAL_INITS = ("sigma_x_plus", "bell_phi_plus")


@dataclass(frozen=True)
class RunSpec:
    config: ModelConfig
    t_max: int
    record_times: tuple[int, ...] = ()
    base_seed: int = 0
    n_realizations: int = 10
    central_init: str = "sigma_x_plus"
    preset: TopologyPreset | None = None
    threads: int = 1

    def __post_init__(self):
        times = tuple(sorted(set(int(t) for t in self.record_times))) or (self.t_max,)
        object.__setattr__(self, "record_times", times)
        if self.t_max < 0:
            raise ValueError("t_max must be >= 0")
        if times[0] < 0 or times[-1] > self.t_max:
            raise ValueError(f"record_times must lie in [0, {self.t_max}]")
        if self.n_realizations < 1:
            raise ValueError("n_realizations must be >= 1")
        if self.central_init not in CENTRAL_INITS:
            raise ValueError(f"central_init must be one of {CENTRAL_INITS}")
        expected_nc = 1 if self.central_init == "sigma_x_plus" else 2
        if self.config.layout.n_c != expected_nc:
            raise DimensionMismatch(
                f"central_init {self.central_init!r} needs n_c = {expected_nc}, "
                f"layout has n_c = {self.config.layout.n_c}"
            )

    def with_(self, **changes) -> "RunSpec":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "t_max": self.t_max,
            "record_times": list(self.record_times),
            "base_seed": self.base_seed,
            "n_realizations": self.n_realizations,
            "central_init": self.central_init,
            "preset": None if self.preset is None else {
                "kind": self.preset.kind, "variant": self.preset.variant,
                "nu": self.preset.nu, "seed": self.preset.seed,
            },
        }


@dataclass
class SweepResult:
    """Tabular experiment output.

    ``rows`` hold one dict per (parameter point, time, realization); rows
    whose ``realization`` is ``"mean"`` are realization averages.
    """

    columns: list[str]
    rows: list[dict]
    metadata: dict = field(default_factory=dict)

    def select(self, **match) -> list[dict]:
        return [row for row in self.rows
                if all(row.get(k) == v for k, v in match.items())]

    def means(self, **match) -> list[dict]:
        return self.select(realization="mean", **match)

    def column(self, name: str, **match) -> np.ndarray:
        return np.array([row[name] for row in self.select(**match)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_fmt(row[c]) for c in self.columns])
        return buf.getvalue()

    def write(self, outdir: str | Path, name: str) -> tuple[Path, Path]:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        text = self.to_csv()
        csv_path = outdir / f"{name}.csv"
        meta_path = outdir / f"{name}.meta.json"
        csv_path.write_text(text, encoding="utf-8")
        meta = dict(self.metadata)
        meta["csv_sha1"] = git_blob_hash(text.encode("utf-8"))
        meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=_json_default),
                             encoding="utf-8")
        return csv_path, meta_path


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj)}")


def git_blob_hash(data: bytes) -> str:
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def spec_hash(payload: dict) -> str:
    text = json.dumps(payload, sort_keys=True, default=_json_default)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# --- trajectories ------------------------------------------------------------

@dataclass
class Trajectory:
    times: tuple[int, ...]
    rhos: list[np.ndarray]

    def observables(self) -> dict[str, np.ndarray]:
        out = {"purity": np.array([purity(r) for r in self.rhos])}
        if self.rhos[0].shape[0] == 4:
            out["concurrence"] = np.array([concurrence(r) for r in self.rhos])
        else:
            out["sigma_z"] = np.array([sigma_z_expectation(r) for r in self.rhos])
        return out


def central_state(central_init: str) -> StateVector:
    return plus_state() if central_init == "sigma_x_plus" else bell_phi_plus()


def initial_state(layout: QubitLayout, central_init: str, base_seed: int,
                  realization: int, include_far: bool = True) -> StateVector:
    """Central state times Haar-random near and far environment states."""
    rng = stream(base_seed, "env", realization)
    parts = [central_state(central_init), haar_random_state(layout.n_e, rng)]
    if include_far:
        parts.append(haar_random_state(layout.n_ep, rng))
    return product_state(parts)


def run_trajectory(model: CompiledModel, psi: StateVector, n_central: int,
                   record_times: Sequence[int]) -> Trajectory:
    """Evolve ``psi`` in place and collect the central reduced state at each record time."""
    rhos = []
    t = 0
    times = tuple(sorted(set(record_times)))
    for target in times:
        evolve(psi, model, target - t)
        t = target
        rhos.append(reduced_density(psi, n_central))
    return Trajectory(times, rhos)


def truncate_far(model: CompiledModel, layout: QubitLayout) -> CompiledModel:
    """Drop the far environment from a compiled model.

    Only valid when no nonzero coupling crosses into the far environment;
    links inside it only act on a factor that is traced out anyway.
    """
    keep = layout.n_c + layout.n_e
    gates = []
    for j, k, s in model.zz_gates:
        if k >= keep:
            if j < keep and s != 0.0:
                raise InvalidConfig([f"link ({j}, {k}) couples to the far environment"])
            continue
        gates.append((j, k, s))
    return CompiledModel(n=keep, zz_gates=tuple(gates),
                         kick_gates=model.kick_gates[:keep].copy())


def far_free_trajectory(spec: RunSpec, config: ModelConfig, realization: int) -> Trajectory:
    """Reference run with the far environment removed (same near-environment sample)."""
    layout = config.layout
    model = truncate_far(compile_model(config, allow_negative=True), layout)
    psi = initial_state(layout, spec.central_init, spec.base_seed, realization,
                        include_far=False)
    return run_trajectory(model, psi, layout.n_c, spec.record_times)


def trajectory(spec: RunSpec, config: ModelConfig, realization: int,
               model: CompiledModel | None = None) -> Trajectory:
    if model is None:
        model = compile_model(config, allow_negative=True)
    psi = initial_state(config.layout, spec.central_init, spec.base_seed, realization)
    return run_trajectory(model, psi, config.layout.n_c, spec.record_times)


# --- generic sweep -----------------------------------------------------------

def _run_points(spec: RunSpec, points: list[tuple[dict, ModelConfig]],
                observables: Sequence[str], times: Sequence[int] | None = None
                ) -> tuple[list[dict], list[dict]]:
    """Evolve every (point, realization) job and build rows in canonical order.

    Returns ``(rows, per_job)`` where ``per_job`` keeps the raw observable
    arrays for protocol-specific post-processing.
    """
    models = [compile_model(cfg, allow_negative=True) for _, cfg in points]
    jobs = [(p, r) for p in range(len(points)) for r in range(spec.n_realizations)]

    def work(job):
        p, r = job
        traj = trajectory(spec, points[p][1], r, models[p])
        return traj.observables()

    if spec.threads > 1:
        with ThreadPoolExecutor(max_workers=spec.threads) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(job) for job in jobs]

    keep = set(spec.record_times if times is None else times)
    idx = [i for i, t in enumerate(spec.record_times) if t in keep]
    rows, per_job = [], []
    for (p, r), obs in zip(jobs, results):
        per_job.append({"point": p, "realization": r, **obs})
    for p, (params, _) in enumerate(points):
        block = [pj for pj in per_job if pj["point"] == p]
        for r, pj in enumerate(block):
            for i in idx:
                row = dict(params, t=spec.record_times[i], realization=r)
                row.update({name: float(pj[name][i]) for name in observables})
                rows.append(row)
        for i in idx:
            row = dict(params, t=spec.record_times[i], realization="mean")
            for name in observables:
                row[name] = float(np.mean([pj[name][i] for pj in block]))
            rows.append(row)
    return rows, per_job


def _metadata(spec: RunSpec, protocol: str, started: float, **extra) -> dict:
    payload = {"protocol": protocol, "spec": spec.to_dict(), **extra}
    return {
        "schema_version": RESULT_SCHEMA_VERSION,
        "protocol": protocol,
        "spec": spec.to_dict(),
        "config_hash": spec_hash(payload),
        "seeds": {"base_seed": spec.base_seed,
                  "environment_stream": "philox(base_seed, 'env', realization)",
                  "n_realizations": spec.n_realizations},
        "wall_clock_s": round(time.perf_counter() - started, 3),
        **extra,
    }


def _observables_for(spec: RunSpec) -> list[str]:
    return ["purity", "concurrence"] if spec.config.layout.n_c == 2 else ["purity"]


# --- protocols ---------------------------------------------------------------

def purity_decay(spec: RunSpec, gammas: Sequence[float]) -> SweepResult:
    """Central purity versus time for each near-far coupling ``gamma``."""
    started = time.perf_counter()
    points = [({"gamma": float(g)}, spec.config.with_(gamma=float(g))) for g in gammas]
    obs = _observables_for(spec)
    rows, _ = _run_points(spec, points, obs)
    return SweepResult(["gamma", "t", "realization", *obs], rows,
                       _metadata(spec, "purity_decay", started, gammas=list(gammas)))


def gamma_sweep(spec: RunSpec, t_fix: int, gamma_grid: Sequence[float]) -> SweepResult:
    """Purity at a fixed time versus ``gamma``; negative values are allowed."""
    if t_fix not in spec.record_times:
        raise ValueError(f"t_fix = {t_fix} is not one of the record times")
    started = time.perf_counter()
    points = [({"gamma": float(g)}, spec.config.with_(gamma=float(g))) for g in gamma_grid]
    obs = _observables_for(spec)
    rows, _ = _run_points(spec, points, obs, times=[t_fix])
    return SweepResult(["gamma", "t", "realization", *obs], rows,
                       _metadata(spec, "gamma_sweep", started, t_fix=t_fix,
                                 gamma_grid=list(gamma_grid)))


def nu_scaling(spec: RunSpec, nus: Sequence[int], gamma_prime: float,
               topology_seed: int, rescale: bool = False) -> SweepResult:
    """Purity decay with ``nu`` random near-far links.

    By default every link carries ``gamma_prime`` for every ``nu``, which is
    the comparison at fixed gamma' = gamma / sqrt(nu).  With ``rescale`` the
    argument is read as the unscaled ``gamma`` instead and each link gets
    ``gamma / sqrt(nu)``.  The link set for each ``nu`` is
    ``random_interlinks(layout, nu, topology_seed)``; everything else comes
    from ``spec.config``.
    """
    started = time.perf_counter()
    layout = spec.config.layout
    points, topologies = [], {}
    for nu in nus:
        links = random_interlinks(layout, int(nu), topology_seed)
        if rescale:
            gamma, per_link = float(gamma_prime), gamma_prime / math.sqrt(nu)
        else:
            gamma, per_link = gamma_prime * math.sqrt(nu), float(gamma_prime)
        cfg = spec.config.with_(eep_links=tuple(links), gamma=per_link)
        topologies[str(nu)] = [list(link) for link in links]
        points.append(({"nu": int(nu), "gamma": gamma, "gamma_prime": per_link}, cfg))
    obs = _observables_for(spec)
    rows, _ = _run_points(spec, points, obs)
    return SweepResult(["nu", "gamma", "gamma_prime", "t", "realization", *obs], rows,
                       _metadata(spec, "nu_scaling", started, gamma_prime=gamma_prime,
                                 rescale=rescale, topology_seed=topology_seed,
                                 topologies=topologies))


def fit_loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of log10(y) against log10(x)."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    good = (x > 0) & (y > 0)
    if good.sum() < 3:
        raise DegenerateFit(f"need at least 3 positive points to fit, got {int(good.sum())}")
    slope, _ = np.polyfit(np.log10(x[good]), np.log10(y[good]), 1)
    return float(slope)


def lambda_sweep(spec: RunSpec, lambdas: Sequence[float], gammas: Sequence[float],
                 t_fix: int, fit_range: tuple[float, float] | None = None) -> SweepResult:
    """``1 - P`` at ``t_fix`` over a grid of (lambda, gamma), with the
    log-log slope against lambda for every gamma stored in the metadata."""
    if any(lam <= 0 for lam in lambdas):
        raise ValueError("lambdas must be positive")
    if t_fix not in spec.record_times:
        raise ValueError(f"t_fix = {t_fix} is not one of the record times")
    started = time.perf_counter()
    points = [({"lambda": float(lam), "gamma": float(g)},
               spec.config.with_(lam=float(lam), gamma=float(g)))
              for g in gammas for lam in lambdas]
    rows, _ = _run_points(spec, points, ["purity"], times=[t_fix])
    for row in rows:
        row["one_minus_purity"] = 1.0 - row["purity"]
    lo, hi = fit_range if fit_range is not None else (min(lambdas), max(lambdas))
    slopes = {}
    for g in gammas:
        pts = [(row["lambda"], row["one_minus_purity"])
               for row in rows if row["realization"] == "mean" and row["gamma"] == g
               and lo <= row["lambda"] <= hi]
        if len(pts) < 3:
            raise DegenerateFit(f"fit range {lo}..{hi} holds {len(pts)} lambda values, need 3")
        slopes[repr(float(g))] = fit_loglog_slope(*zip(*pts))
    meta = _metadata(spec, "lambda_sweep", started, t_fix=t_fix, lambdas=list(lambdas),
                     gammas=list(gammas), fit_range=[lo, hi], slopes=slopes)
    return SweepResult(["lambda", "gamma", "t", "realization", "purity", "one_minus_purity"],
                       rows, meta)


def sudden_death_time(times: Sequence[int], concurrences: Sequence[float],
                      threshold: float = SUDDEN_DEATH_THRESHOLD) -> int | None:
    """First record time with concurrence below ``threshold`` (None if never).

    The true death time lies between this record time and the previous one.
    """
    for t, c in zip(times, concurrences):
        if c < threshold:
            return int(t)
    return None


def _require_two_qubit(spec: RunSpec):
    if spec.config.layout.n_c != 2 or spec.central_init != "bell_phi_plus":
        raise DimensionMismatch("needs a two-qubit central system starting in a Bell state")


def concurrence_decay(spec: RunSpec, gammas: Sequence[float]) -> SweepResult:
    """Concurrence and purity of the two central qubits over time.

    The metadata records, per gamma, the sudden-death time of every
    realization and of the realization-mean concurrence curve.
    """
    _require_two_qubit(spec)
    started = time.perf_counter()
    points = [({"gamma": float(g)}, spec.config.with_(gamma=float(g))) for g in gammas]
    rows, per_job = _run_points(spec, points, ["purity", "concurrence"])
    deaths = _death_table(spec, gammas, rows, per_job)
    return SweepResult(["gamma", "t", "realization", "purity", "concurrence"], rows,
                       _metadata(spec, "concurrence_decay", started, gammas=list(gammas),
                                 sudden_death=deaths,
                                 sudden_death_threshold=SUDDEN_DEATH_THRESHOLD))


def _death_table(spec, gammas, rows, per_job):
    deaths = {}
    for p, g in enumerate(gammas):
        per_real = [sudden_death_time(spec.record_times, pj["concurrence"])
                    for pj in per_job if pj["point"] == p]
        mean_c = [row["concurrence"] for row in rows
                  if row["realization"] == "mean" and row["gamma"] == float(g)]
        deaths[repr(float(g))] = {
            "per_realization": per_real,
            "mean_curve": sudden_death_time(spec.record_times, mean_c),
        }
    return deaths


@dataclass
class CPResult:
    result: SweepResult
    werner: list
    dephasing: list
    unital_fraction: float


def cp_trajectory(spec: RunSpec, gammas: Sequence[float], tol: float = 0.02,
                  n_curve: int = 201) -> CPResult:
    """(P, C) trajectories plus the Werner and phase-damping reference curves.

    ``unital_fraction`` is the share of per-realization points lying between
    the two curves within ``tol`` in C at matched P.
    """
    _require_two_qubit(spec)
    started = time.perf_counter()
    points = [({"gamma": float(g)}, spec.config.with_(gamma=float(g))) for g in gammas]
    rows, per_job = _run_points(spec, points, ["purity", "concurrence"])
    real_rows = [row for row in rows if row["realization"] != "mean"]
    mask = unital_region_mask([row["purity"] for row in real_rows],
                              [row["concurrence"] for row in real_rows], tol=tol)
    for row, inside in zip(real_rows, mask):
        row["unital"] = int(inside)
    for row in rows:
        if row["realization"] == "mean":
            row["unital"] = int(unital_region_mask([row["purity"]], [row["concurrence"]],
                                                   tol=tol)[0])
    fraction = float(mask.mean()) if len(mask) else 1.0
    meta = _metadata(spec, "cp_trajectory", started, gammas=list(gammas),
                     unital_tolerance=tol, unital_fraction=fraction,
                     purity_dispersion=purity_dispersion(real_rows),
                     sudden_death=_death_table(spec, gammas, rows, per_job))
    result = SweepResult(["gamma", "t", "realization", "purity", "concurrence", "unital"],
                         rows, meta)
    return CPResult(result, werner_curve(n_curve), dephasing_curve(n_curve), fraction)


def purity_dispersion(rows: Sequence[dict], bins: Sequence[float] | None = None) -> float:
    """Mean standard deviation of purity inside concurrence bins.

    Quantifies how widely trajectory points spread in purity at a given
    concurrence; empty or single-point bins are skipped.
    """
    if bins is None:
        bins = np.linspace(0.0, 1.0, 21)
    c = np.array([row["concurrence"] for row in rows])
    p = np.array([row["purity"] for row in rows])
    spreads = []
    for lo, hi in zip(bins[:-1], bins[1:]):
        sel = (c >= lo) & (c < hi)
        if sel.sum() >= 2:
            spreads.append(float(np.std(p[sel])))
    return float(np.mean(spreads)) if spreads else 0.0


@dataclass
class ControlResult:
    baseline: SweepResult
    coupled: SweepResult
    max_abs_diff: float


def far_coupling_control(spec: RunSpec, epsilon_factor: float = 0.01,
                         gammas: Sequence[float] | None = None,
                         far_qubit: int | None = None) -> ControlResult:
    """Purity decay with and without a direct central-far link of strength
    ``epsilon_factor * lambda``, on identical seed paths."""
    started = time.perf_counter()
    if gammas is None:
        gammas = [spec.config.gamma]
    strength = epsilon_factor * spec.config.lam
    base = purity_decay(spec, gammas)
    coupled_spec = spec.with_(config=with_far_coupling(spec.config, strength, far_qubit))
    coupled = purity_decay(coupled_spec, gammas)
    a = np.array([row["purity"] for row in base.means()])
    b = np.array([row["purity"] for row in coupled.means()])
    diff = float(np.max(np.abs(a - b))) if a.size else 0.0
    for res in (base, coupled):
        res.metadata.update(epsilon_factor=epsilon_factor, cep_strength=strength,
                            max_abs_diff=diff,
                            wall_clock_s=round(time.perf_counter() - started, 3))
    return ControlResult(base, coupled, diff)


def env_size_sweep(spec: RunSpec, sizes: Sequence[tuple[int, int]], t_fix: int,
                   gamma_grid: Sequence[float]) -> SweepResult:
    """Purity at ``t_fix`` versus gamma for several (n_e, n_ep) environment sizes.

    The topology for each size is rebuilt from ``spec.preset`` (baseline
    chain by default) with the couplings and fields of ``spec.config``.
    """
    if t_fix not in spec.record_times:
        raise ValueError(f"t_fix = {t_fix} is not one of the record times")
    started = time.perf_counter()
    cfg0 = spec.config
    preset = spec.preset or TopologyPreset("spectator" if cfg0.layout.n_c == 2
                                           else "baseline-chain")
    points = []
    for n_e, n_ep in sizes:
        layout = QubitLayout(cfg0.layout.n_c, int(n_e), int(n_ep))
        cfg = build_preset(preset, layout, cfg0.J, cfg0.lam, cfg0.gamma, cfg0.fields)
        for g in gamma_grid:
            points.append(({"n_e": int(n_e), "n_ep": int(n_ep), "gamma": float(g)},
                           cfg.with_(gamma=float(g))))
    obs = _observables_for(spec)
    rows, _ = _run_points(spec, points, obs, times=[t_fix])
    return SweepResult(["n_e", "n_ep", "gamma", "t", "realization", *obs], rows,
                       _metadata(spec, "env_size_sweep", started, t_fix=t_fix,
                                 sizes=[list(s) for s in sizes],
                                 gamma_grid=list(gamma_grid)))
