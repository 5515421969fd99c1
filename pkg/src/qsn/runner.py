"""Run a validated scenario and write its CSV, manifest and plot data."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .channels import (
    GH_POINTS,
    LEAKAGE_TOL,
    PSD_TOL,
    WEAK_NOISE_GUARD,
    NoiseModel,
    apply_channel,
)
from .echo import EchoRun, echo_probabilities, repetition_seed, run_echo, trace_vH
from .errors import NumericalGuardError, ValidationError
from .gaussian import multiparam_advantage_report, uniform_basis
from .metrology import (
    EIG_FLOOR,
    QfiReport,
    collective_parameters,
    curse_factor,
    generator_matrix,
    qfi_matrix_multi,
    qfi_oracle,
    qfi_rayleigh_single,
    qfi_single,
    quadratic_form,
    rank_one_factor,
)
from .probes import apply_passive_network, average_number_variance, build_probe, random_network
from .scenario import Scenario
from .tensor_core import StateVector

log = logging.getLogger(__name__)

ORACLE_SPREAD_TOL = 0.05
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


@dataclass
class TaskResult:
    columns: list[str]
    rows: list[dict]
    curves: dict[str, tuple[str, str]] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


@dataclass
class RunResult:
    exit_code: int
    csv_path: Path | None = None
    manifest_path: Path | None = None
    plot_paths: list[Path] = field(default_factory=list)
    rows: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    error: str | None = None


# -- helpers --
def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _oracle_channel(probe: StateVector, model: NoiseModel, s: Scenario):
    m = s.method
    kw = {}
    if m.backend == "oracle":
        kw = dict(method=m.oracle_method, points=m.quadrature_points, samples=m.mc_samples, seed=m.seed)
    elif m.backend == "exact" and not probe.space.all_diagonal:
        kw = dict(points=m.quadrature_points)

    def channel(g):
        return apply_channel(probe, model.with_g(g), m.backend, **kw)

    return channel


def _oracle(probe, model, s: Scenario, g: float):
    return qfi_oracle(_oracle_channel(probe, model, s), g, s.method.delta, ORACLE_SPREAD_TOL)


# -- tasks --
def task_qfi(s: Scenario, pmap) -> TaskResult:
    space = s.space_spec()
    probe = build_probe(s.probe_spec(space))
    H = generator_matrix(probe)
    v = s.v_matrix()
    Sigma = None if s.noise.Sigma is None else np.asarray(s.noise.Sigma, dtype=float)
    tr = float(np.trace(v @ H.H))

    def point(g):
        analytic = qfi_single(H, v) if Sigma is None else qfi_rayleigh_single(g, v, Sigma, H)
        row = {"g": g, "trace_vH": tr, "qfi_analytic": analytic}
        if s.method.oracle:
            model = NoiseModel.factored(g, v, Sigma)
            est = _oracle(probe, model, s, g)
            rep = QfiReport(analytic, est.value, {"g": g})
            row.update(qfi_oracle=est.value, qfi_richardson=est.richardson, deviation=rep.deviation)
        return row

    rows = pmap(point, s.noise.g)
    cols = ["g", "trace_vH", "qfi_analytic"]
    curves = {"qfi_analytic": ("g", "qfi_analytic")}
    if s.method.oracle:
        cols += ["qfi_oracle", "qfi_richardson", "deviation"]
        curves["qfi_oracle"] = ("g", "qfi_oracle")
    summary = {"fingerprint": H.fingerprint}
    if s.method.oracle:
        summary["max_deviation"] = max(r["deviation"] for r in rows)
    return TaskResult(cols, rows, curves, summary)


def _named_W(W, K: int) -> np.ndarray:
    if isinstance(W, str):
        if W == "uniform":
            return uniform_basis(K)
        if W == "identity":
            return np.eye(K)
        raise ValidationError(f"multi.W: unknown basis {W!r}; use 'uniform', 'identity' or a matrix")
    return np.asarray(W, dtype=float)


def task_qfi_multi(s: Scenario, pmap) -> TaskResult:
    space = s.space_spec()
    probe = build_probe(s.probe_spec(space))
    H = generator_matrix(probe)
    K = space.K
    V = np.asarray(s.noise.V, dtype=float) if s.noise.V is not None else s.noise.g[0] ** 2 * s.v_matrix()
    W = _named_W(s.multi.W, K)
    xi, C = collective_parameters(V, W)
    F = qfi_matrix_multi(H, W, C, paired=s.multi.paired)
    rows = [
        {"I": I, "J": J, "xi_I": xi[I], "xi_J": xi[J], "C_IJ": C[I, J], "F_IJ": F[I, J]}
        for I in range(K)
        for J in range(K)
    ]
    qf = quadratic_form(F, xi, paired=s.multi.paired)
    target = 4 * float(np.trace(V @ H.H))
    summary = {"quadratic_form": qf, "four_trace_VH": target, "abs_error": abs(qf - target)}
    return TaskResult(["I", "J", "xi_I", "xi_J", "C_IJ", "F_IJ"], rows, {}, summary)


def task_echo(s: Scenario, pmap) -> TaskResult:
    space = s.space_spec()
    probe = build_probe(s.probe_spec(space))
    v = s.v_matrix()
    m = s.method
    jobs = []
    for gi, g in enumerate(s.noise.g):
        model = NoiseModel.factored(g, v)
        p1 = echo_probabilities(probe, model, m.backend)[1]
        for r in range(m.repetitions):
            jobs.append((gi, r, model, p1))

    def one(job):
        gi, r, model, p1 = job
        seed = repetition_seed(m.seed, gi * m.repetitions + r)
        run = run_echo(EchoRun(probe, model, m.backend, m.shots, seed), p1=p1)
        return {"g_index": gi, "rep": r, **run.row(), "saturated": run.saturated}

    rows = pmap(one, jobs)
    c = trace_vH(probe, NoiseModel.factored(1.0, v))
    per_g = []
    for gi, g in enumerate(s.noise.g):
        est = np.array([r["g_hat"] for r in rows if r["g_index"] == gi], dtype=float)
        per_g.append(
            {
                "g": g,
                "mean_g_hat": float(est.mean()),
                "var_g_hat": float(est.var(ddof=1)) if est.size > 1 else None,
                "crb": 1.0 / (m.shots * 4 * c) if c > 0 else None,
            }
        )
    cols = ["g_index", "rep", "seed", "nu", "g_true", "g_hat", "ci_lo", "ci_hi", "p1_model", "k1", "saturated"]
    return TaskResult(cols, rows, {"g_hat": ("g_true", "g_hat")}, {"trace_vH": c, "per_g": per_g})


def task_sweep_K(s: Scenario, pmap) -> TaskResult:
    g0 = s.noise.g[0]

    def point(K):
        space = s.space_spec(K)
        v = s.v_matrix(K)
        ent = build_probe(s.probe_spec(space))
        sep = build_probe(s.probe_spec(space, s.sweep.separable))
        f_ent = qfi_single(generator_matrix(ent), v)
        f_sep = qfi_single(generator_matrix(sep), v)
        row = {"K": K, "qfi_ent": f_ent, "qfi_sep": f_sep, "ratio": f_ent / f_sep}
        if s.method.oracle:
            model = NoiseModel.factored(g0, v)
            row["qfi_ent_oracle"] = _oracle(ent, model, s, g0).value
            row["qfi_sep_oracle"] = _oracle(sep, model, s, g0).value
        return row

    rows = pmap(point, s.sweep.K)
    cols = ["K", "qfi_ent", "qfi_sep", "ratio"]
    if s.method.oracle:
        cols += ["qfi_ent_oracle", "qfi_sep_oracle"]
    curves = {"qfi_ent": ("K", "qfi_ent"), "qfi_sep": ("K", "qfi_sep")}
    return TaskResult(cols, rows, curves, {"g_oracle": g0 if s.method.oracle else None})


def task_rayleigh(s: Scenario, pmap) -> TaskResult:
    space = s.space_spec()
    probe = build_probe(s.probe_spec(space))
    H = generator_matrix(probe)
    v = s.v_matrix()
    tr, u = rank_one_factor(v)
    uncursed = qfi_single(H, v)
    grid = [(g, s2) for s2 in s.noise.sigma2 for g in s.noise.g]

    def point(gs):
        g, s2 = gs
        Sigma = s2 * np.outer(u, u)
        signal = g * g * tr
        row = {
            "g": g,
            "sigma2": s2,
            "signal": signal,
            "factor": curse_factor(signal, s2),
            "qfi_uncursed": uncursed,
            "qfi_cursed": qfi_rayleigh_single(g, v, Sigma, H),
        }
        if s.method.oracle:
            est = _oracle(probe, NoiseModel.factored(g, v, Sigma), s, g)
            row["qfi_oracle"] = est.value
            row["deviation"] = abs(est.value - row["qfi_cursed"]) / row["qfi_cursed"]
        return row

    rows = pmap(point, grid)
    cols = ["g", "sigma2", "signal", "factor", "qfi_uncursed", "qfi_cursed"]
    if s.method.oracle:
        cols += ["qfi_oracle", "deviation"]
    curves = {}
    for k, s2 in enumerate(s.noise.sigma2):
        curves[f"factor_sigma2_{k}"] = ("signal", "factor", {"sigma2": s2})
    summary = {"trace_v": tr}
    if s.method.oracle:
        summary["max_deviation"] = max(r["deviation"] for r in rows)
    return TaskResult(cols, rows, curves, summary)


def photon_budgets(K: int, budget: int) -> list[int]:
    """Spread ``budget`` photons over K modes as evenly as possible."""
    base, extra = divmod(budget, K)
    return [base + (1 if j < extra else 0) for j in range(K)]


def random_local_product(space, budgets, rng) -> StateVector:
    amps = np.ones(1, dtype=complex)
    for d, b in zip(space.dims, budgets):
        loc = np.zeros(d, dtype=complex)
        loc[: b + 1] = rng.standard_normal(b + 1) + 1j * rng.standard_normal(b + 1)
        amps = np.kron(amps, loc)
    return StateVector.normalized(space, amps)


def task_nogo_passive(s: Scenario, pmap) -> TaskResult:
    """Passive networks conserve total number, so Var(n_avg) and the QFI cannot change.

    Input states keep total photon number below the truncation so no network
    can leak population out of the space.
    """
    space = s.space_spec()
    K = space.K
    budget = s.nogo.photon_budget if s.nogo.photon_budget is not None else space.dims[0] - 1
    rng = np.random.default_rng(s.method.seed)
    v = s.v_matrix()
    jobs = []
    for k in range(s.nogo.networks):
        psi = random_local_product(space, photon_budgets(K, budget), rng)
        jobs.append((k, psi, random_network(K, s.nogo.depth, rng)))

    def one(job):
        k, psi, layers = job
        out = apply_passive_network(psi, layers)
        var_in, var_out = average_number_variance(psi), average_number_variance(out)
        f_in = qfi_single(generator_matrix(psi), v)
        f_out = qfi_single(generator_matrix(out), v)
        return {
            "network": k,
            "var_in": var_in,
            "var_out": var_out,
            "delta_var": var_out - var_in,
            "qfi_sep": f_in,
            "qfi_ent": f_out,
            "delta_qfi": f_out - f_in,
        }

    rows = pmap(one, jobs)
    summary = {
        "max_abs_delta_var": max(abs(r["delta_var"]) for r in rows),
        "max_abs_delta_qfi": max(abs(r["delta_qfi"]) for r in rows),
        "photon_budget": budget,
    }
    cols = ["network", "var_in", "var_out", "delta_var", "qfi_sep", "qfi_ent", "delta_qfi"]
    return TaskResult(cols, rows, {"delta_var": ("network", "delta_var")}, summary)


def task_cv_advantage(s: Scenario, pmap) -> TaskResult:
    K = s.space.K
    W = _named_W(s.multi.W, K)
    rows = multiparam_advantage_report(K, s.multi.n, s.multi.nbar, W)
    cols = ["I", "var_ent", "var_sep", "qfi_ent", "qfi_sep", "ratio", "target_ratio", "sep_bound", "ent_occupation", "sep_occupation"]
    summary = {"max_rel_gap": max(abs(r["ratio"] / r["target_ratio"] - 1) for r in rows)}
    return TaskResult(cols, rows, {"ratio": ("I", "ratio")}, summary)


TASK_FUNCS = {
    "qfi": task_qfi,
    "qfi_multi": task_qfi_multi,
    "echo": task_echo,
    "sweep_K": task_sweep_K,
    "rayleigh": task_rayleigh,
    "nogo_passive": task_nogo_passive,
    "cv_advantage": task_cv_advantage,
}


def tolerances() -> dict:
    return {
        "psd": PSD_TOL,
        "eigenvalue_floor": EIG_FLOOR,
        "leakage": LEAKAGE_TOL,
        "weak_noise_guard": WEAK_NOISE_GUARD,
        "oracle_spread": ORACLE_SPREAD_TOL,
        "quadrature_points_default": GH_POINTS,
    }


def _curve_data(rows, spec) -> list[tuple[float, float]]:
    x, y = spec[0], spec[1]
    match = spec[2] if len(spec) > 2 else {}
    return [(r[x], r[y]) for r in rows if all(r.get(k) == val for k, val in match.items())]


def run_task(s: Scenario, threads: int = 1) -> TaskResult:
    fn = TASK_FUNCS[s.task]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            # map() yields in submission order, whatever order workers finish
            return fn(s, lambda f, xs: list(ex.map(f, xs)))
    return fn(s, lambda f, xs: [f(x) for x in xs])


def run_scenario(s: Scenario, out_dir=None, threads: int = 1, command: str | None = None) -> RunResult:
    """Run ``s``; write ``<name>.csv``, ``<name>.manifest.json`` and plot data.

    Returns exit code 0 on success, 2 on validation failure, 3 when a
    numerical guard trips. Nothing but the manifest is written on failure.
    """
    out = Path(out_dir if out_dir is not None else s.output.path)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "name": s.name,
        "task": s.task,
        "command": command,
        "versions": {
            "qsn": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "seed": s.method.seed,
        "threads": threads,
        "tolerances": tolerances(),
        "scenario": s.to_dict(),
    }
    t0 = time.perf_counter()
    result = RunResult(EXIT_OK)
    try:
        res = run_task(s, threads)
    except ValidationError as exc:
        result = RunResult(EXIT_VALIDATION, error=f"{type(exc).__name__}: {exc}")
    except NumericalGuardError as exc:
        result = RunResult(EXIT_NUMERICAL, error=f"{type(exc).__name__}: {exc}")
    manifest["wall_time_s"] = time.perf_counter() - t0
    manifest["exit_code"] = result.exit_code
    mpath = out / f"{s.name}.manifest.json"
    result.manifest_path = mpath
    if result.exit_code != EXIT_OK:
        manifest["error"] = result.error
        mpath.write_text(json.dumps(manifest, indent=2, default=_jsonable) + "\n")
        return result

    text = csv_text(res.columns, res.rows)
    cpath = out / f"{s.name}.csv"
    cpath.write_text(text)
    plots = []
    if s.output.plot_data:
        for cname, spec in res.curves.items():
            p = out / f"{s.name}.{cname}.dat"
            lines = [f"# {spec[0]} {spec[1]}"] + [f"{_fmt(a)} {_fmt(b)}" for a, b in _curve_data(res.rows, spec)]
            p.write_text("\n".join(lines) + "\n")
            plots.append(p)
    manifest.update(
        csv=cpath.name,
        csv_sha256=hashlib.sha256(text.encode()).hexdigest(),
        plot_files=[p.name for p in plots],
        summary=res.summary,
    )
    mpath.write_text(json.dumps(manifest, indent=2, default=_jsonable) + "\n")
    return RunResult(EXIT_OK, cpath, mpath, plots, res.rows, res.summary)
