"""Experiment driver: configs, the offline/online pipeline, parameter studies and timing."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import io
from .errors import InvalidArgument
from .fullorder import OptimalTriple
from .gmsfem import LocalModel, build_multiscale_space, project_kkt_local
from .greedy import GreedyResult, greedy_train
from .grid import build_coarse_grid
from .rb import ReducedModel, load_bundle, project_reduced, save_bundle
from .scenarios import SCENARIOS, Scenario, build_scenario
from .stochastic.stats import error_metrics, moments

log = logging.getLogger(__name__)

STUDIES = ("beta", "H", "N", "L")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "distributed-deterministic"
    nx: int = 60
    ny: int = 60
    ncx: int = 6
    ncy: int = 6
    L: int = 5
    n_max: int = 6
    tol: float = 1e-5
    betas: tuple = (1e-2,)
    n_train: int = 50
    n_test: int = 20
    seed: int = 0
    test_seed: int = 1
    output: str = "runs/default"
    coarse_list: tuple = (5, 6, 10)
    n_list: tuple = ()
    L_list: tuple = (2, 3, 4, 5, 6)
    sigma: float = 0.1
    n_terms: int = 5
    eim_tol: float = 1e-6
    eim_max: int = 50
    fine_repeats: int = 1
    online_repeats: int = 5

    def __post_init__(self):
        for name in ("betas", "coarse_list", "n_list", "L_list"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        self.validate()

    def validate(self):
        if self.experiment not in SCENARIOS:
            raise InvalidArgument(f"unknown experiment {self.experiment!r}")
        counts = dict(nx=self.nx, ny=self.ny, ncx=self.ncx, ncy=self.ncy, L=self.L,
                      n_max=self.n_max, n_train=self.n_train, n_test=self.n_test,
                      n_terms=self.n_terms, eim_max=self.eim_max,
                      fine_repeats=self.fine_repeats, online_repeats=self.online_repeats)
        bad = [k for k, v in counts.items() if int(v) < 1]
        if bad:
            raise InvalidArgument(f"counts must be positive: {bad}")
        if not self.betas or any(b <= 0 for b in self.betas):
            raise InvalidArgument("every beta must be positive")
        if self.tol <= 0 or self.eim_tol <= 0:
            raise InvalidArgument("tolerances must be positive")

    @property
    def beta(self) -> float:
        return self.betas[0]

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise InvalidArgument(f"unknown config keys {sorted(extra)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    def scenario_settings(self, beta: float | None = None) -> dict:
        s = dict(nx=self.nx, ny=self.ny, beta=self.beta if beta is None else beta)
        if self.experiment == "random-domain":
            s.update(sigma=self.sigma, n_terms=self.n_terms, eim_tol=self.eim_tol,
                     eim_max=self.eim_max, seed=self.seed)
        elif self.experiment == "neumann-boundary":
            s.update(eim_tol=self.eim_tol, eim_max=self.eim_max, seed=self.seed)
        return s


class ExperimentError(RuntimeError):
    """A stage of the driver failed; ``record`` is what gets written to disk."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage} failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.record = dict(stage=stage, error=type(cause).__name__, message=str(cause))


def _stage(name):
    def wrap(fn):
        def inner(*a, **k):
            try:
                return fn(*a, **k)
            except ExperimentError:
                raise
            except Exception as exc:
                raise ExperimentError(name, exc) from exc
        inner.__name__ = fn.__name__
        inner.__doc__ = fn.__doc__
        return inner
    return wrap


# ---------------------------------------------------------------- offline / online

@dataclass
class OfflineResult:
    config: ExperimentConfig
    scenario: Scenario = field(repr=False)
    local: LocalModel = field(repr=False)
    greedy: GreedyResult = field(repr=False)
    times: dict = field(default_factory=dict)

    @property
    def model(self) -> ReducedModel:
        return self.greedy.model

    def model_at(self, N: int) -> ReducedModel:
        return project_reduced(self.local, self.greedy.spaces, N)


@_stage("scenario")
def make_scenario(config: ExperimentConfig, beta: float | None = None) -> Scenario:
    return build_scenario(config.experiment, **config.scenario_settings(beta))


@_stage("offline")
def offline(config: ExperimentConfig, scenario: Scenario | None = None, *, ncx=None, L=None,
            beta=None) -> OfflineResult:
    """Local basis, greedy selection and projection (the offline stage)."""
    sc = scenario or make_scenario(config, beta)
    ncx, ncy = (config.ncx, config.ncy) if ncx is None else (ncx, ncx)
    L = L or config.L
    t0 = time.perf_counter()
    coarse = build_coarse_grid(sc.grid, ncx, ncy)
    space = build_multiscale_space(sc.grid, coarse, sc.basis_kappa, L, sc.blocks.state_dofs)
    local = project_kkt_local(sc.blocks, space)
    t1 = time.perf_counter()
    train = sc.sample(config.n_train, config.seed)
    res = greedy_train(local, train, config.tol, config.n_max, mu_ref=sc.mu_ref)
    t2 = time.perf_counter()
    times = dict(local_basis=t1 - t0, greedy=t2 - t1,
                 snapshots=float(sum(r["t_snapshot"] for r in res.log)))
    return OfflineResult(config, sc, local, res, times)


def manifest(off: OfflineResult, L: int | None = None) -> dict:
    sc, m = off.scenario, off.model
    return dict(experiment=sc.name, affine=sc.affine,
                eim={k: dict(Q=s.Q, converged=s.converged, residual=float(s.history[-1]))
                     for k, s in sc.eim.items()},
                N=off.greedy.spaces.N, n1=m.n1, n2=m.n2, M=off.local.M, L=L or off.config.L,
                Q_a=len(m.pieces["K"]), Q_u=len(m.pieces["U"]), tol=off.config.tol,
                samples=[np.asarray(s).tolist() for s in off.greedy.spaces.samples],
                eps=[float(e) for e in off.greedy.eps], config=off.config.to_dict())


@_stage("persist")
def persist(off: OfflineResult, directory) -> dict:
    d = Path(directory)
    man = manifest(off)
    bundle = save_bundle(off.model, d / "bundle", extra=man)
    paths = dict(bundle=str(bundle),
                 selection_log=str(io.dump_selection_log(off.greedy.log, d / "selection_log.csv")),
                 eigenvalues=str(io.dump_eigenvalues(off.local.space.eigenvalues,
                                                     d / "local_eigenvalues.csv")),
                 multiscale_basis=str(io.dump_matrix(off.local.space.R, d / "multiscale_basis.txt")),
                 config=str(_write(d / "config.json", off.config.to_json())))
    return paths


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


@_stage("reference")
def reference_solutions(scenario: Scenario, mus) -> list[OptimalTriple]:
    return [scenario.fine_solve(m) for m in mus]


def evaluate(scenario: Scenario, model: ReducedModel, mus, refs, local: LocalModel | None = None):
    """Error metrics of the reduced model against fine (and optionally local) references."""
    reds = [model.solve(m) for m in mus]
    M3 = [scenario.state_mass(m) for m in mus]
    Mc = [scenario.control_mass(m) for m in mus]
    K = [scenario.energy_matrix(m) for m in mus]
    out = error_metrics(refs, reds, M3, Mc, K)
    out["J_mean"] = float(np.mean([r.J for r in reds]))
    out["f_norm"] = float(np.mean([np.sqrt(r.f @ (C @ r.f)) for r, C in zip(reds, Mc)]))
    if local is not None:
        locs = [local.solve(m).fine for m in mus]
        loc_err = error_metrics(locs, reds, M3, Mc)
        out.update({f"{k}_local": v for k, v in loc_err.items()})
    return out, reds


@_stage("online")
def online(model: ReducedModel, mus) -> list[OptimalTriple]:
    return [model.solve(m) for m in mus]


def timing_harness(model: ReducedModel, scenario: Scenario, mus, fine_repeats: int = 1,
                   online_repeats: int = 5) -> dict:
    """Mean per-sample wall time of fine KKT solves and online solves (with downscaling).

    Each path runs the whole batch ``repeats`` times and the median batch is kept.
    """
    def batch(fn, repeats):
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            for m in mus:
                fn(m)
            times.append((time.perf_counter() - t0) / len(mus))
        return float(np.median(times))

    fine = batch(scenario.fine_solve, fine_repeats)
    onl = batch(lambda m: model.downscale(model.online_solve(m), cost_value=False), online_repeats)
    b = scenario.blocks
    fine_size = b.n_control + 2 * b.n_state
    return dict(fine_mean=fine, online_mean=onl, speedup=fine / onl if onl > 0 else np.inf,
                fine_size=fine_size, reduced_size=model.size,
                size_ratio=fine_size / model.size, n_samples=len(mus))


# ---------------------------------------------------------------- studies

def _row(config, **kw):
    return dict(experiment=config.experiment, nx=config.nx, **kw)


def beta_study(config: ExperimentConfig, mus) -> list[dict]:
    rows = []
    for beta in config.betas:
        off = offline(config, beta=beta)
        refs = reference_solutions(off.scenario, mus)
        err, _ = evaluate(off.scenario, off.model, mus, refs)
        rows.append(_row(config, beta=beta, H=1 / config.ncx, L=config.L, N=off.greedy.spaces.N,
                         e2_u=err["e2_u"], e2_f=err["e2_f"], J_min=err["J_mean"],
                         f_norm=err["f_norm"]))
    return rows


def coarse_study(config: ExperimentConfig, mus, scenario=None, refs=None) -> list[dict]:
    sc = scenario or make_scenario(config)
    refs = refs or reference_solutions(sc, mus)
    rows = []
    for nc in config.coarse_list:
        off = offline(config, sc, ncx=nc)
        err, _ = evaluate(sc, off.model, mus, refs)
        rows.append(_row(config, beta=config.beta, H=1 / nc, L=config.L, N=off.greedy.spaces.N,
                         e2_u=err["e2_u"], e2_f=err["e2_f"], e2_lam=err["e2_lam"],
                         J_min=err["J_mean"]))
    return rows


def n_study(config: ExperimentConfig, mus, scenario=None, refs=None, off=None) -> list[dict]:
    sc = scenario or make_scenario(config)
    refs = refs or reference_solutions(sc, mus)
    off = off or offline(config, sc)
    Ns = config.n_list or tuple(range(1, off.greedy.spaces.N + 1))
    rows = []
    for N in Ns:
        if N > off.greedy.spaces.N:
            continue
        err, _ = evaluate(sc, off.model_at(N), mus, refs, off.local)
        rows.append(_row(config, beta=config.beta, H=1 / config.ncx, L=config.L, N=N,
                         eps_N=float(off.greedy.eps[N - 1]), **err))
    return rows


def l_study(config: ExperimentConfig, mus, scenario=None, refs=None) -> list[dict]:
    sc = scenario or make_scenario(config)
    refs = refs or reference_solutions(sc, mus)
    rows = []
    for L in config.L_list:
        off = offline(config, sc, L=L)
        err, _ = evaluate(sc, off.model, mus, refs)
        rows.append(_row(config, beta=config.beta, H=1 / config.ncx, L=L, N=off.greedy.spaces.N,
                         M=off.local.M, e2_u=err["e2_u"], e2_f=err["e2_f"],
                         e2_lam=err["e2_lam"]))
    return rows


# ---------------------------------------------------------------- driver

@dataclass
class RunReport:
    config: ExperimentConfig
    tables: dict = field(default_factory=dict)      # name -> rows
    timing: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)


def run_experiment(config: ExperimentConfig, studies=(), bench: bool = False) -> RunReport:
    """Offline stage, online solves over the test set, optional studies and timing.

    Writes tables as CSV, the manifest and timing as JSON under ``config.output``.
    A failure writes ``error.json`` naming the stage and re-raises.
    """
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    report = RunReport(config)
    try:
        sc = make_scenario(config)
        off = offline(config, sc)
        report.paths.update(persist(off, out))
        mus = sc.sample(config.n_test, config.test_seed)
        refs = reference_solutions(sc, mus)
        rows = n_study(config, mus, sc, refs, off)
        report.tables["errors"] = rows
        red = online(off.model, mus)
        report.tables["online"] = [dict(id=k, **{f"mu_{j + 1}": float(v) for j, v in enumerate(m)},
                                        J=r.J) for k, (m, r) in enumerate(zip(mus, red))]
        if len(red) >= 2:
            mo = moments([r.u for r in red])
            report.paths["u_mean"] = str(io.dump_field(sc.grid, mo.mean, out / "u_mean.csv"))
            report.paths["u_std"] = str(io.dump_field(sc.grid, mo.std, out / "u_std.csv"))
        for name in studies:
            if name not in STUDIES:
                raise ExperimentError("study", InvalidArgument(f"unknown study {name!r}"))
            if name == "beta":
                report.tables["beta_study"] = beta_study(config, mus)
            elif name == "H":
                report.tables["H_study"] = coarse_study(config, mus, sc, refs)
            elif name == "N":
                report.tables["N_study"] = rows
            elif name == "L":
                report.tables["L_study"] = l_study(config, mus, sc, refs)
        report.timing = dict(offline_local_basis=off.times["local_basis"],
                             offline_greedy=off.times["greedy"],
                             offline_snapshots=off.times["snapshots"])
        if bench:
            report.timing.update(timing_harness(off.model, sc, mus, config.fine_repeats,
                                                config.online_repeats))
    except ExperimentError as exc:
        _write(out / "error.json", json.dumps(exc.record, indent=2))
        raise
    for name, rows_ in report.tables.items():
        report.paths[name] = str(io.write_table(rows_, out / f"{name}.csv"))
    report.paths["timing"] = str(_write(out / "timing.json", json.dumps(report.timing, indent=2)))
    return report


def run_online(bundle_dir, config: ExperimentConfig | None = None, n_test: int | None = None,
               seed: int | None = None) -> tuple[list, np.ndarray, ReducedModel]:
    """Reload a persisted model and solve a fresh test set."""
    bundle_dir = Path(bundle_dir)
    if config is None:
        config = ExperimentConfig.from_json((bundle_dir.parent / "config.json").read_text())
    sc = make_scenario(config)
    model = load_bundle(bundle_dir, sc.blocks)
    mus = sc.sample(n_test or config.n_test, config.test_seed if seed is None else seed)
    return online(model, mus), mus, model


def offline_online_pipeline(config: ExperimentConfig) -> RunReport:
    return run_experiment(config)
