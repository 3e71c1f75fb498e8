"""Experiment orchestration: configs, pipelines, run records, sweeps.

A run takes a JSON experiment config, dispatches to the named pipeline,
and writes CSV/JSON artifacts plus rendered figures into the output
directory, finishing with a ``run_record.json`` whose manifest lists every
written file with its digest.  Headline numbers are bit-reproducible for a
fixed (config, seed): replica batches own fixed stream paths and results
are merged in batch order, so scheduling and worker count do not matter.

The semantic config hash excludes ``out_dir`` and ``workers``, which do not
affect any number.
"""
from __future__ import annotations

import csv
import datetime
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, report
from . import asymptotics as asym
from . import bridges, solver, variational
from . import noise as noise_mod
from .errors import ConfigInvalid, ModuleError, OutputUnwritable, PamLabError
from .kernels import (
    Measure,
    gamma_eval,
    heat_convolve_measure,
    spec_from_dict,
)
from .noise import SpaceTimeGrid
from .streams import SeedStreams

KINDS = ("simulate", "fk-moments", "theta", "hartree", "me-check", "peaks",
         "holder", "girsanov", "noise-check")

WORKERS_ENV = "PAMLAB_WORKERS"


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int
    out_dir: str = "runs/out"
    workers: int = 0
    zero_noise: bool = False
    covariance: dict | None = None
    grid: dict | None = None
    measure: dict | None = None
    t: float | None = None
    m: int | None = None
    replicas: int | None = None
    time_steps: int | None = None
    targets: tuple | None = None
    radii: tuple | None = None
    tolerances: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def semantic_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "seed": self.seed,
            "zero_noise": self.zero_noise,
            "covariance": self.covariance,
            "grid": self.grid,
            "measure": self.measure,
            "t": self.t,
            "m": self.m,
            "replicas": self.replicas,
            "time_steps": self.time_steps,
            "targets": self.targets,
            "radii": self.radii,
            "tolerances": self.tolerances,
            "params": self.params,
        }
        return {k: v for k, v in out.items() if v not in (None, {}, ())}


_REQUIRED = {
    "simulate": ("covariance", "grid", "measure", "t"),
    "noise-check": ("covariance", "grid", "replicas"),
    "fk-moments": ("covariance", "measure", "t", "m", "replicas"),
    "theta": ("covariance", "t", "m", "replicas"),
    "hartree": ("params",),
    "me-check": ("params",),
    "peaks": ("covariance", "grid", "measure", "t", "replicas"),
    "holder": ("covariance", "grid", "t", "replicas"),
    "girsanov": ("t", "replicas"),
}


def _normalize(value):
    if isinstance(value, list):
        return tuple(_normalize(v) for v in value)
    if isinstance(value, dict):
        return {k: _normalize(v) for k, v in value.items()}
    return value


def config_from_dict(data: dict, kind: str | None = None) -> ExperimentConfig:
    data = dict(data)
    cfg_kind = data.pop("kind", None) or kind
    if cfg_kind is None:
        raise ConfigInvalid("config needs a 'kind'")
    if kind is not None and cfg_kind != kind:
        raise ConfigInvalid(f"config kind {cfg_kind!r} does not match requested {kind!r}")
    if cfg_kind not in KINDS:
        raise ConfigInvalid(f"unknown experiment kind {cfg_kind!r}; choices: {KINDS}")
    if "seed" not in data:
        raise ConfigInvalid("config needs an explicit 'seed'")
    known = {f.name for f in ExperimentConfig.__dataclass_fields__.values()}
    unknown = set(data) - known
    if unknown:
        raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
    cfg = ExperimentConfig(kind=cfg_kind, **{k: _normalize(v) for k, v in data.items()})
    for req in _REQUIRED[cfg_kind]:
        if getattr(cfg, req) in (None, {}, ()):
            raise ConfigInvalid(f"kind {cfg_kind!r} requires {req!r}")
    try:
        if cfg.covariance is not None:
            spec_from_dict(dict(cfg.covariance))
        if cfg.grid is not None:
            _grid_from_dict(dict(cfg.grid))
        if cfg.measure is not None:
            _measure_from_dict(cfg.measure)
    except PamLabError as exc:
        raise ConfigInvalid(str(exc)) from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigInvalid(f"malformed config section: {exc}") from exc
    return cfg


def load_config(path, kind: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigInvalid(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"config is not valid JSON: {exc}") from exc
    if overrides:
        data.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_dict(data, kind=kind)


def config_hash(cfg: ExperimentConfig) -> str:
    canon = json.dumps(cfg.semantic_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _grid_from_dict(data: dict) -> SpaceTimeGrid:
    return SpaceTimeGrid(
        dim=int(data.get("dim", 1)),
        points_per_axis=int(data["points_per_axis"]),
        spacing=float(data["spacing"]),
        time_step=float(data["time_step"]),
        horizon=float(data["horizon"]),
    )


def _measure_from_dict(data) -> Measure:
    data = dict(data)
    if "atoms" in data:
        return Measure.from_atoms([(a["location"], a["mass"]) for a in data["atoms"]])
    if "uniform" in data:
        u = dict(data["uniform"])
        return Measure.uniform_density(float(u["lo"]), float(u["hi"]),
                                       mass=float(u.get("mass", 1.0)),
                                       n=int(u.get("n", 512)))
    raise ConfigInvalid("measure needs 'atoms' or 'uniform'")


# ---------------------------------------------------------------------------
# run records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunRecord:
    config_hash: str
    code_version: str
    seed: int
    started: str
    finished: str
    outputs: tuple
    headline: dict

    def headline_digest(self) -> str:
        canon = json.dumps(self.headline, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def _digest_file(path: Path) -> dict:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return {"path": path.name, "sha256": h.hexdigest(), "bytes": path.stat().st_size}


# ---------------------------------------------------------------------------
# pipelines
# ---------------------------------------------------------------------------

def _resolve_workers(cfg: ExperimentConfig) -> int:
    if cfg.workers and cfg.workers > 0:
        return cfg.workers
    env = os.environ.get(WORKERS_ENV)
    return max(1, int(env)) if env else 1


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x):
    return f"{x:.17g}" if isinstance(x, float) else x


def _pipeline_simulate(cfg, out, streams):
    spec = spec_from_dict(dict(cfg.covariance))
    grid = _grid_from_dict(dict(cfg.grid))
    u0 = _measure_from_dict(cfg.measure)
    method = cfg.params.get("method", "fft")
    state = solver.evolve_mild(u0, spec, grid, streams, cfg.t,
                               zero_noise=cfg.zero_noise, method=method,
                               seed_path=("solver", "replica", 0))
    solver.field_to_csv(out / "field.csv", state)
    solver.metadata_to_json(out / "metadata.json", solver.field_metadata(state, spec))
    if cfg.params.get("dump_binary"):
        solver.field_to_binary(out / "field.bin", state)
    report.field_figure(out / "field.png", grid.sites(), state.values)
    headline = {
        "negativity_fraction": state.negativity_fraction,
        "field_max": float(np.max(state.values)),
        "field_min": float(np.min(state.values)),
    }
    if cfg.zero_noise:
        mesh = solver._site_mesh(grid)
        target = heat_convolve_measure(cfg.t, u0, mesh)
        headline["max_abs_error"] = float(np.max(np.abs(state.values - target)))
    return headline


def _pipeline_noise_check(cfg, out, streams):
    spec = spec_from_dict(dict(cfg.covariance))
    grid = _grid_from_dict(dict(cfg.grid))
    lags = [float(v) for v in cfg.params.get("lags", (0.0, 0.5, 1.0, 2.0))]
    n = cfg.replicas
    batch = 512
    values = []
    for b in range(math.ceil(n / batch)):
        nb = min(batch, n - b * batch)
        rng = streams.stream("noise-check", "batch", b)
        values.append(noise_mod.synthesize_increments(spec, grid, rng, nb))
    all_values = np.concatenate(values, axis=0)
    stats = noise_mod.empirical_covariance(all_values, [v / grid.spacing for v in lags])
    # empirical_covariance saw spacing-1 arrays; lags were rescaled to index units
    rows, dev = [], 0.0
    ests, errs, targs = [], [], []
    for (lag_idx, est, se), lag in zip(stats, lags):
        target = gamma_eval(spec, lag) * grid.time_step if spec.bounded else float("nan")
        dev = max(dev, abs(est - target) / se if se > 0 else 0.0)
        rows.append([_fmt(lag), _fmt(est), _fmt(se), _fmt(target),
                     streams.stream_id("noise-check")])
        ests.append(est)
        errs.append(se)
        targs.append(target)
    _write_csv(out / "covariance.csv", ["lag", "estimate", "se", "target", "stream_id"], rows)
    report.covariance_figure(out / "covariance.png", lags, ests, errs, targs)
    return {"max_sigma_deviation": dev, "n_slices": n,
            "aliased_fraction": noise_mod.aliased_fraction(spec, grid)}


def _fk_part(payload):
    (cov, t, targets, measure, replicas, time_steps, seed, normalized, indices) = payload
    spec = spec_from_dict(dict(cov))
    u0 = _measure_from_dict(measure)
    return bridges.fk_moment_estimate(
        spec, t, np.asarray(targets, dtype=float), u0, replicas=replicas,
        time_steps=time_steps, streams=SeedStreams(seed), seed_path=("fk",),
        normalized=normalized, batch_indices=list(indices))


def _pipeline_fk(cfg, out, streams):
    spec = spec_from_dict(dict(cfg.covariance))
    u0 = _measure_from_dict(cfg.measure)
    targets = cfg.targets if cfg.targets is not None else tuple([0.0] * cfg.m)
    time_steps = cfg.time_steps or 64
    normalized = bool(cfg.params.get("normalized", False))
    workers = _resolve_workers(cfg)
    replicas = cfg.replicas
    batch_size = max(64, min(1024, replicas // 8 if replicas >= 512 else replicas))
    n_batches = max(1, math.ceil(replicas / batch_size))
    if workers <= 1 or n_batches == 1:
        est = bridges.fk_moment_estimate(spec, cfg.t, np.asarray(targets, dtype=float),
                                         u0, replicas=replicas, time_steps=time_steps,
                                         streams=streams, seed_path=("fk",),
                                         normalized=normalized)
    else:
        splits = [list(range(w, n_batches, workers)) for w in range(workers)]
        payloads = [(cfg.covariance, cfg.t, targets, cfg.measure, replicas,
                     time_steps, cfg.seed, normalized, idx) for idx in splits if idx]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_fk_part, payloads))
        est = bridges.merge_estimates(parts)
    record = {
        "op": "fk_moment_estimate",
        "params_hash": config_hash(cfg),
        "value": est.value,
        "se": est.se,
        "log_value": est.log_value,
        "replicas": est.replicas,
        "seed": cfg.seed,
        "normalized": normalized,
    }
    with open(out / "estimate.json", "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
    return {"value": est.value, "se": est.se, "log_value": est.log_value,
            "exponent_max": est.exponent_max}


def _pipeline_theta(cfg, out, streams):
    spec = spec_from_dict(dict(cfg.covariance))
    est = bridges.theta_estimate(spec, cfg.t, cfg.m, replicas=cfg.replicas,
                                 time_steps=cfg.time_steps or 64,
                                 s_grid_size=int(cfg.params.get("s_grid_size", 16)),
                                 streams=streams, seed_path=("theta",))
    s_vals, profile, errors = est.profile
    rows = [[_fmt(float(s)), _fmt(float(v)), _fmt(float(e)), est.stream_id]
            for s, v, e in zip(s_vals, profile, errors)]
    _write_csv(out / "profile.csv", ["s", "estimate", "se", "stream_id"], rows)
    report.profile_figure(out / "profile.png", s_vals, profile, errors, est.argmax_s)
    with open(out / "estimate.json", "w") as fh:
        json.dump({"op": "theta_estimate", "params_hash": config_hash(cfg),
                   "value": est.value, "se": est.se, "log_value": est.log_value,
                   "replicas": est.replicas, "seed": cfg.seed,
                   "argmax_s": est.argmax_s}, fh, indent=2, sort_keys=True)
    return {"theta": est.value, "log_theta": est.log_value, "se": est.se,
            "argmax_s": est.argmax_s}


def _variational_kernel(cfg):
    kernel = cfg.params.get("kernel", "delta")
    if isinstance(kernel, str) and kernel in (variational.DELTA, variational.ZERO):
        return kernel, kernel
    if cfg.covariance is not None:
        spec = spec_from_dict(dict(cfg.covariance))
    else:
        spec = spec_from_dict(dict(kernel))
    return spec, spec.tag()


def _pipeline_hartree(cfg, out, streams):
    spec, label = _variational_kernel(cfg)
    grid = variational.VarGrid(dim=int(cfg.params.get("dim", 1)),
                               n=int(cfg.params.get("n", 1024)),
                               extent=float(cfg.params.get("extent", 40.0)))
    opts = variational.OptimizerOptions(
        tol=float(cfg.tolerances.get("residual", 1e-7)),
        restarts=int(cfg.params.get("restarts", 3)),
        seed=cfg.seed)
    objective = cfg.params.get("objective", "hartree")
    fn = variational.hartree_energy if objective == "hartree" else variational.m_energy
    value, state = fn(spec, grid, opts, scale=float(cfg.params.get("scale", 1.0)))
    variational.profile_to_csv(out / "profile.csv", state)
    report.variational_figure(out / "profile.png", grid.sites(), state.values, value)
    summary = {"kernel": label, "value": value, "residual": state.residual,
               "grid": {"dim": grid.dim, "n": grid.n, "extent": grid.extent},
               "iterations": state.iterations,
               "restart_energies": list(state.restart_energies)}
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return {"energy": value, "residual": state.residual, "iterations": state.iterations}


def _pipeline_me_check(cfg, out, streams):
    spec, label = _variational_kernel(cfg)
    grid = variational.VarGrid(dim=int(cfg.params.get("dim", 1)),
                               n=int(cfg.params.get("n", 512)),
                               extent=float(cfg.params.get("extent", 40.0)))
    opts = variational.OptimizerOptions(seed=cfg.seed)
    residual, lhs, rhs = variational.me_relation_check(spec, grid, opts)
    with open(out / "me_check.json", "w") as fh:
        json.dump({"kernel": label, "residual": residual, "lhs": lhs, "rhs": rhs},
                  fh, indent=2, sort_keys=True)
    return {"residual": residual, "lhs": lhs, "rhs": rhs}


def _peaks_replicate(payload):
    (cov, grid_d, measure_d, t, radii, seed, rep, method, zero_noise) = payload
    spec = spec_from_dict(dict(cov))
    grid = _grid_from_dict(dict(grid_d))
    u0 = _measure_from_dict(measure_d)
    streams = SeedStreams(seed)
    if method == "gauge":
        # single point mass: track the normalized ratio in its own gauge,
        # valid at arbitrary radii
        if len(u0.atoms) != 1 or u0.density is not None:
            raise ConfigInvalid("gauge peak runs need a single-atom measure")
        loc = float(np.atleast_1d(np.asarray(u0.atoms[0][0], dtype=float))[0])
        field = solver.ratio_field(loc, spec, grid, streams, t,
                                   zero_noise=zero_noise, audit=False,
                                   seed_path=("peaks", "replica", rep))
    else:
        field = solver.evolve_mild(u0, spec, grid, streams, t, zero_noise=zero_noise,
                                   method=method, seed_path=("peaks", "replica", rep))
    series = asym.peak_series(field, u0, t, radii, replicate_id=rep)
    return series


def _pipeline_peaks(cfg, out, streams):
    radii = cfg.radii or tuple(float(math.e) ** n for n in range(1, 9))
    replicates = cfg.replicas
    method = cfg.params.get("method", "gauge")
    workers = _resolve_workers(cfg)
    payloads = [(cfg.covariance, cfg.grid, cfg.measure, cfg.t, tuple(radii),
                 cfg.seed, rep, method, cfg.zero_noise) for rep in range(replicates)]
    if workers <= 1:
        series_list = [_peaks_replicate(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            series_list = list(ex.map(_peaks_replicate, payloads))
    spec = spec_from_dict(dict(cfg.covariance))
    alpha_bar = spec.alpha if spec.hypothesis == "H2" else 0.0
    exponent = 2.0 / (4.0 - alpha_bar)

    rows = []
    for series in series_list:
        sid = SeedStreams(cfg.seed).stream_id("peaks", "replica", series.replicate_id)
        for r, stat, exc in zip(series.radii, series.statistics, series.excluded_sites):
            rows.append([series.replicate_id, _fmt(float(r)), _fmt(float(stat)), exc, sid])
    _write_csv(out / "peaks.csv", ["replicate", "radius", "statistic", "excluded", "stream_id"],
               rows)
    lam_med, lam_half = asym.fit_growth_ensemble(series_list, exponent)
    report.peaks_figure(out / "peaks.png", series_list, exponent)
    max_r = max(radii)
    finals = np.array([s.statistics[-1] for s in series_list])
    ratio = float(np.median(finals)) / math.log(max_r) ** exponent
    return {"median_ratio_at_max_radius": ratio, "exponent": exponent,
            "lambda_median": lam_med, "lambda_half_width": lam_half,
            "replicates": replicates}


def _holder_replicate(payload):
    (cov, grid_d, t, width, seed, rep) = payload
    spec = spec_from_dict(dict(cov))
    grid = _grid_from_dict(dict(grid_d))
    streams = SeedStreams(seed)
    rf = solver.ratio_field(0.0, spec, grid, streams, t, width=width,
                            seed_path=("holder", "replica", rep), audit=False)
    return rf.values


def _pipeline_holder(cfg, out, streams):
    grid = _grid_from_dict(dict(cfg.grid))
    replicates = cfg.replicas
    width = cfg.params.get("width")
    workers = _resolve_workers(cfg)
    payloads = [(cfg.covariance, cfg.grid, cfg.t, width, cfg.seed, rep)
                for rep in range(replicates)]
    if workers <= 1:
        samples = [_holder_replicate(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            samples = list(ex.map(_holder_replicate, payloads))
    sites = grid.sites()
    center = grid.points_per_axis // 2
    seps = cfg.params.get("separations")
    if seps is None:
        decades = np.geomspace(grid.spacing, min(2.0, grid.period / 8), 12)
        seps = [max(1, int(round(d / grid.spacing))) for d in decades]
    pairs = sorted({(center, center + s) for s in seps})
    est = asym.holder_estimate(samples, sites, pairs)
    sid = SeedStreams(cfg.seed).stream_id("holder")
    _write_csv(out / "increments.csv", ["separation", "mean_abs_increment", "stream_id"],
               [[_fmt(float(s)), _fmt(float(v)), sid]
                for s, v in zip(est.separations, est.mean_abs_increments)])
    report.holder_figure(out / "holder.png", est)
    return {"eta_hat": est.eta_hat, "half_width": est.half_width,
            "saturated": est.saturated}


def _pipeline_girsanov(cfg, out, streams):
    lam = float(cfg.params.get("lam", 0.5))
    dim = int(cfg.params.get("dim", 1))
    names = list(cfg.params.get("functionals", sorted(bridges.PATH_FUNCTIONALS)))
    rows, lhs_list, rhs_list, err_list = [], [], [], []
    worst = 0.0
    for name in names:
        chk = bridges.girsanov_check(lam, cfg.t, dim, name, replicas=cfg.replicas,
                                     time_steps=cfg.time_steps or 128, streams=streams)
        gap_sigma = abs(chk.lhs - chk.rhs) / chk.combined_se if chk.combined_se > 0 else 0.0
        worst = max(worst, gap_sigma)
        rows.append([name, _fmt(chk.lhs), _fmt(chk.rhs), _fmt(chk.lhs_se), _fmt(chk.rhs_se),
                     streams.stream_id("girsanov", name)])
        lhs_list.append(chk.lhs)
        rhs_list.append(chk.rhs)
        err_list.append(chk.combined_se)
    _write_csv(out / "girsanov.csv",
               ["functional", "lhs", "rhs", "lhs_se", "rhs_se", "stream_id"], rows)
    report.girsanov_figure(out / "girsanov.png", names, lhs_list, rhs_list, err_list)
    unit_gap = abs(bridges.girsanov_unit_rhs(lam, dim) - 1.0)
    return {"max_sigma_gap": worst, "unit_identity_gap": unit_gap}


_PIPELINES = {
    "simulate": _pipeline_simulate,
    "noise-check": _pipeline_noise_check,
    "fk-moments": _pipeline_fk,
    "theta": _pipeline_theta,
    "hartree": _pipeline_hartree,
    "me-check": _pipeline_me_check,
    "peaks": _pipeline_peaks,
    "holder": _pipeline_holder,
    "girsanov": _pipeline_girsanov,
}


# ---------------------------------------------------------------------------
# run / sweep
# ---------------------------------------------------------------------------

def run(cfg: ExperimentConfig) -> RunRecord:
    """Execute one experiment config and persist its artifacts."""
    out = Path(cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("ok")
        probe.unlink()
    except OSError as exc:
        raise OutputUnwritable(f"cannot write to {out}: {exc}") from exc

    streams = SeedStreams(cfg.seed)
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    t0 = time.monotonic()
    try:
        headline = _PIPELINES[cfg.kind](cfg, out, streams)
    except PamLabError:
        raise
    except Exception as exc:  # pragma: no cover - defensive wrap
        raise ModuleError(f"{cfg.kind} pipeline failed: {exc}") from exc
    finished = datetime.datetime.now(datetime.timezone.utc).isoformat()
    headline = {k: (float(v) if isinstance(v, (np.floating, np.integer)) else v)
                for k, v in headline.items()}

    outputs = tuple(_digest_file(p) for p in sorted(out.iterdir())
                    if p.is_file() and p.name != "run_record.json")
    record = RunRecord(config_hash=config_hash(cfg), code_version=__version__,
                       seed=cfg.seed, started=started, finished=finished,
                       outputs=outputs, headline=headline)
    with open(out / "run_record.json", "w") as fh:
        json.dump({
            "config_hash": record.config_hash,
            "code_version": record.code_version,
            "seed": record.seed,
            "started": record.started,
            "finished": record.finished,
            "elapsed_seconds": time.monotonic() - t0,
            "outputs": list(record.outputs),
            "headline": record.headline,
            "headline_digest": record.headline_digest(),
        }, fh, indent=2, sort_keys=True)
    return record


def _set_leaf(data: dict, dotted: str, value):
    """Copy of ``data`` with the dotted leaf replaced."""
    parts = dotted.split(".")

    def rebuild(node, keys):
        if not isinstance(node, dict):
            raise ConfigInvalid(f"sweep axis {dotted!r} does not name a config leaf")
        out = dict(node)
        if len(keys) == 1:
            out[keys[0]] = value
            return out
        if keys[0] not in node:
            raise ConfigInvalid(f"sweep axis {dotted!r} does not name a config leaf")
        out[keys[0]] = rebuild(node[keys[0]], keys[1:])
        return out

    return rebuild(data, parts)


def sweep(base: ExperimentConfig, axis: str, values, out_dir: str | None = None):
    """Run the base config once per axis value with derived sub-seeds."""
    base_dict = dict(base.semantic_dict())
    base_dict["kind"] = base.kind
    root = Path(out_dir or base.out_dir)
    records = []
    rows = []
    seeder = SeedStreams(base.seed)
    for i, value in enumerate(values):
        data = _set_leaf(base_dict, axis, value)
        sub_seed = int(seeder.stream("sweep", i).integers(2 ** 62))
        data["seed"] = sub_seed
        data["out_dir"] = str(root / f"{axis.replace('.', '_')}={value}")
        data["workers"] = base.workers
        cfg = config_from_dict(data)
        record = run(cfg)
        records.append(record)
        row = {"axis": axis, "value": value, "seed": sub_seed}
        row.update({f"headline.{k}": v for k, v in record.headline.items()})
        rows.append(row)
    keys = sorted({k for row in rows for k in row})
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "sweep.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        writer.writerows(rows)
    return records
