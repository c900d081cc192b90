"""Config-driven command line entry point.

    mpfluor --preset fig2a --out results/
    mpfluor --config my_run.json --out results/ --workers 4

A config is a JSON object with an ``experiment`` name, ``model`` fields,
``numerics`` (Krylov settings), ``grids`` and optional ``variants`` (named
model overrides, one dataset each) and ``options``.  Unknown keys anywhere
are rejected.  Every CSV gets a JSON sidecar with the resolved config and
its hash; identical configs give byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .dicke import closed_form_deviation, closed_form_zero_set, critical_curve
from .dressed import energy_levels_vs_coupling
from .io import OutputExistsError, write_table
from .models import ModelSpec, SpecError
from .motion import (
    density_evolution,
    diagonalize_h0,
    ehrenfest_evolve,
    initial_coefficients,
    perturbative_spectrum,
    s_coefficients,
)
from .propagator import KrylovConfig, PropagationError
from .spectra import (
    ScanError,
    SpectrumDataset,
    dataset_metadata,
    local_maxima,
    peak_metrics,
    scan_spectrum,
    time_resolved_map,
)

EXPERIMENTS = ("spectrum", "timemap", "levels", "dicke-critical", "array-scaling", "motion", "ehrenfest", "aea-compare")
TOP_KEYS = {"name", "description", "experiment", "model", "numerics", "grids", "variants", "options", "output", "deterministic"}
GRID_KEYS = {"omega_b", "time", "N", "p0", "g_a", "lambda_b", "lambda_a"}
OPTION_KEYS = {
    "spectrum": {"t_final", "sample_every"},
    "timemap": set(),
    "levels": {"n_levels"},
    "dicke-critical": {"frequency_sets"},
    "array-scaling": {"rayleigh_window", "shg_window", "save_maps"},
    "motion": {"cache_dir", "rest_x0", "spectrum_times", "ceiling"},
    "ehrenfest": {"x0", "freeze_envelopes"},
    "aea-compare": {"t_final", "window"},
}

EXIT_OK, EXIT_FAILED_POINTS, EXIT_CONFIG, EXIT_EXISTS = 0, 1, 2, 3


class ConfigError(SpecError):
    pass


@dataclass
class RunConfig:
    experiment: str
    model: ModelSpec
    numerics: KrylovConfig
    grids: dict = field(default_factory=dict)
    variants: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    name: str = "run"
    output: str | None = None
    raw: dict = field(default_factory=dict)

    def variant_models(self) -> dict[str, ModelSpec]:
        if not self.variants:
            return {self.name: self.model}
        out = {}
        for label, overrides in self.variants.items():
            merged = {**self.model.to_dict(), **overrides}
            try:
                out[label] = ModelSpec.from_dict(merged)
            except SpecError as exc:
                raise ConfigError(f"variants.{label}: {exc}") from exc
        return out

    def resolved(self) -> dict:
        """Fully resolved config (defaults filled in) for dataset sidecars."""
        return {
            "name": self.name,
            "experiment": self.experiment,
            "model": self.model.to_dict(),
            "numerics": self.numerics.to_dict(),
            "grids": {k: np.asarray(v).tolist() for k, v in self.grids.items()},
            "variants": self.variants,
            "options": self.options,
        }


# ----------------------------------------------------------------------
# parsing


def _grid(key: str, spec) -> np.ndarray:
    if isinstance(spec, dict):
        extra = set(spec) - {"start", "stop", "num"}
        if extra or not {"start", "stop", "num"} <= set(spec):
            raise ConfigError(f"grids.{key}: expected {{start, stop, num}} or a list")
        if int(spec["num"]) < 1:
            raise ConfigError(f"grids.{key}.num: must be positive")
        return np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["num"]))
    if isinstance(spec, list):
        return np.asarray(spec, dtype=float)
    raise ConfigError(f"grids.{key}: expected {{start, stop, num}} or a list")


def parse_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be a JSON object")
    unknown = sorted(set(data) - TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    exp = data.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment={exp!r}: must be one of {', '.join(EXPERIMENTS)}")
    if data.get("deterministic", True) is not True:
        raise ConfigError("deterministic: runs are always deterministic; the flag cannot be disabled")
    try:
        model = ModelSpec.from_dict(dict(data.get("model", {})))
    except SpecError as exc:
        raise ConfigError(f"model: {exc}") from exc
    num = dict(data.get("numerics", {}))
    known = set(KrylovConfig().to_dict())
    bad = sorted(set(num) - known)
    if bad:
        raise ConfigError(f"unknown numerics keys: {', '.join(bad)}")
    try:
        numerics = KrylovConfig(**num)
    except ValueError as exc:
        raise ConfigError(f"numerics: {exc}") from exc
    grids_raw = dict(data.get("grids", {}))
    bad = sorted(set(grids_raw) - GRID_KEYS)
    if bad:
        raise ConfigError(f"unknown grid keys: {', '.join(bad)}")
    grids = {k: _grid(k, v) for k, v in grids_raw.items()}
    options = dict(data.get("options", {}))
    bad = sorted(set(options) - OPTION_KEYS[exp])
    if bad:
        raise ConfigError(f"unknown options for {exp}: {', '.join(bad)}")
    variants = dict(data.get("variants", {}))
    for label, ov in variants.items():
        if not isinstance(ov, dict):
            raise ConfigError(f"variants.{label}: expected an object of model overrides")
    cfg = RunConfig(exp, model, numerics, grids, variants, options, str(data.get("name", exp)), data.get("output"), data)
    cfg.variant_models()  # validate every variant up front
    return cfg


def preset_names() -> list[str]:
    root = resources.files("mpfluor") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> dict:
    path = resources.files("mpfluor") / "presets" / f"{name}.json"
    if not path.is_file():
        raise ConfigError(f"preset={name!r}: unknown; available: {', '.join(preset_names())}")
    return json.loads(path.read_text(encoding="utf-8"))


# ----------------------------------------------------------------------
# experiments


@dataclass
class RunResult:
    files: list = field(default_factory=list)
    failed: list = field(default_factory=list)  # (label, point, message)


def _need(cfg: RunConfig, *keys):
    for k in keys:
        if k not in cfg.grids:
            raise ConfigError(f"grids.{k}: required for experiment {cfg.experiment}")


def _meta(cfg: RunConfig, model: ModelSpec, results: dict | None = None, **extra) -> dict:
    # extras describe the run and enter the hash; results do not
    meta = dataset_metadata(model, cfg.numerics, **extra)
    meta["config"]["run"] = cfg.resolved()
    if results:
        meta["results"] = results
    return meta


def _emit_spectrum(ds: SpectrumDataset, cfg: RunConfig, model, path, overwrite, **extra) -> Path:
    ds.metadata = _meta(cfg, model, **extra)
    return ds.to_csv(path, overwrite=overwrite)


def _run_spectrum(cfg, out, workers, overwrite, res):
    _need(cfg, "omega_b")
    opts = cfg.options
    for label, model in cfg.variant_models().items():
        try:
            ds = scan_spectrum(
                model, cfg.grids["omega_b"], opts.get("t_final"), cfg.numerics, workers, opts.get("sample_every")
            )
        except ScanError as exc:
            res.failed.extend((label, w, str(exc)) for w in exc.failed_omegas)
            continue
        res.files.append(_emit_spectrum(ds, cfg, model, out / f"{label}_spectrum.csv", overwrite, variant=label))


def _run_timemap(cfg, out, workers, overwrite, res):
    _need(cfg, "omega_b", "time")
    for label, model in cfg.variant_models().items():
        try:
            ds = time_resolved_map(model, cfg.grids["omega_b"], cfg.grids["time"], cfg.numerics, workers)
        except ScanError as exc:
            res.failed.extend((label, w, str(exc)) for w in exc.failed_omegas)
            continue
        res.files.append(_emit_spectrum(ds, cfg, model, out / f"{label}_timemap.csv", overwrite, variant=label))


def _run_levels(cfg, out, workers, overwrite, res):
    _need(cfg, "g_a")
    for label, model in cfg.variant_models().items():
        curves = energy_levels_vs_coupling(model, cfg.grids["g_a"], cfg.options.get("n_levels"))
        meta = _meta(cfg, model, {"tracking_flags": curves.flags}, variant=label)
        res.files.append(curves.to_csv(out / f"{label}_levels.csv", overwrite, meta))


def _run_dicke(cfg, out, workers, overwrite, res):
    _need(cfg, "lambda_b")
    sets = cfg.options.get("frequency_sets", {"resonant": [1.0, 1.0, 1.0], "nonresonant": [1.0, 0.5, 1.0]})
    meta = {"config": {"run": cfg.resolved()}, "code_version": __version__}
    for label, freqs in sets.items():
        curve = critical_curve(*freqs, cfg.grids["lambda_b"])
        m = dict(meta, frequencies=list(freqs), absent_lambda_b=curve.lam_b[curve.flagged].tolist())
        res.files.append(curve.to_csv(out / f"critical_{label}.csv", overwrite, m))
    if "lambda_a" in cfg.grids:
        lb, la = cfg.grids["lambda_b"], cfg.grids["lambda_a"]
        dev = closed_form_deviation(lb, la)
        rows = [(b, a, dev[i, j]) for i, b in enumerate(lb) for j, a in enumerate(la)]
        m = dict(meta, label="CROSS-CHECK", note="printed closed form minus eigensolver, nonresonant case")
        res.files.append(write_table(out / "closed_form_deviation.csv", ("lambda_b", "lambda_a", "deviation"), rows, m, overwrite))
        zs = closed_form_zero_set(lb)
        res.files.append(
            write_table(out / "closed_form_zero_set.csv", ("lambda_b", "lambda_a_zero"), list(zip(lb, zs)), m, overwrite)
        )


def array_scaling_point(model: ModelSpec, N: int, omega_grid, time_grid, cfg: KrylovConfig, workers: int,
                        rayleigh_window, shg_window):
    """Rise times and final peak heights for one array size."""
    m = model.replace(n_atoms=int(N))
    ds = time_resolved_map(m, omega_grid, time_grid, cfg, workers, keep_pm=False)
    ray = peak_metrics(ds, rayleigh_window)
    shg = peak_metrics(ds, shg_window)
    return ds, ray, shg


def _run_array_scaling(cfg, out, workers, overwrite, res):
    _need(cfg, "omega_b", "time", "N")
    opts = cfg.options
    m0 = cfg.model
    rw = tuple(opts.get("rayleigh_window", (0.9 * m0.omega_a, 1.1 * m0.omega_a)))
    sw = tuple(opts.get("shg_window", (1.9 * m0.omega_a, 2.1 * m0.omega_a)))
    rows = []
    flags = []
    for N in cfg.grids["N"]:
        N = int(N)
        try:
            ds, ray, shg = array_scaling_point(m0, N, cfg.grids["omega_b"], cfg.grids["time"], cfg.numerics, workers, rw, sw)
        except (ScanError, PropagationError) as exc:
            res.failed.append(("N", N, str(exc)))
            continue
        rows.append((N, ray.rise_time, shg.rise_time, ray.height, shg.height))
        flags.append({"N": N, "rayleigh": ray.note, "shg": shg.note,
                      "rayleigh_omega": ray.peak_frequency, "shg_omega": shg.peak_frequency})
        if opts.get("save_maps", False):
            res.files.append(_emit_spectrum(ds, cfg, m0.replace(n_atoms=N), out / f"timemap_N{N}.csv", overwrite, N=N))
    meta = _meta(cfg, m0, {"peaks": flags}, rayleigh_window=rw, shg_window=sw)
    res.files.append(
        write_table(out / "array_scaling.csv", ("N", "T_rayleigh", "T_shg", "P_rayleigh", "P_shg"), rows, meta, overwrite)
    )


def _p0_label(p0: float) -> str:
    return f"{p0:g}".replace(".", "p").replace("-", "m")


def _run_motion(cfg, out, workers, overwrite, res):
    _need(cfg, "omega_b", "time")
    opts = cfg.options
    for label, model in cfg.variant_models().items():
        decomp = diagonalize_h0(model, opts.get("ceiling", 12000), opts.get("cache_dir"))
        S = s_coefficients(decomp)
        p0s = cfg.grids.get("p0", np.array([model.p0]))
        for p0 in p0s:
            m = model.replace(p0=float(p0))
            if float(p0) == 0.0 and "rest_x0" in opts:
                m = m.replace(x0=float(opts["rest_x0"]))
            tag = f"{label}_p0_{_p0_label(float(p0))}"
            dens = density_evolution(m, cfg.grids["time"], decomp)
            meta = _meta(cfg, m, {"regions": dens.regions()}, variant=label)
            res.files.append(dens.to_csv(out / f"{tag}_density.csv", overwrite, meta))
            c = initial_coefficients(decomp, m)
            ds = perturbative_spectrum(decomp, S, c, cfg.grids["omega_b"], opts.get("spectrum_times"))
            res.files.append(_emit_spectrum(ds, cfg, m, out / f"{tag}_spectrum.csv", overwrite, variant=label))


def _run_ehrenfest(cfg, out, workers, overwrite, res):
    _need(cfg, "time")
    opts = cfg.options
    for label, model in cfg.variant_models().items():
        r = ehrenfest_evolve(
            model, cfg.grids["time"], cfg.grids.get("omega_b"), cfg.numerics, opts.get("x0"),
            bool(opts.get("freeze_envelopes", False)),
        )
        meta = _meta(cfg, model, {"cavity_exit_time": r.cavity_exit_time, "boundary_exit_time": r.boundary_exit_time},
                     variant=label)
        rows = list(zip(r.times, r.x, r.p, r.energy, r.quantum_norm))
        res.files.append(write_table(out / f"{label}_trajectory.csv", ("t", "x", "p", "E", "norm"), rows, meta, overwrite))
        if "omega_b" in cfg.grids:
            res.files.append(_emit_spectrum(r.spectrum(model, cfg.numerics), cfg, model, out / f"{label}_spectrum.csv",
                                            overwrite, variant=label))


def _run_aea_compare(cfg, out, workers, overwrite, res):
    _need(cfg, "omega_b")
    window = tuple(cfg.options.get("window", (0.85, 1.15)))
    summary = []
    for label, model in cfg.variant_models().items():
        try:
            ds = scan_spectrum(model, cfg.grids["omega_b"], cfg.options.get("t_final"), cfg.numerics, workers)
        except ScanError as exc:
            res.failed.extend((label, w, str(exc)) for w in exc.failed_omegas)
            continue
        res.files.append(_emit_spectrum(ds, cfg, model, out / f"{label}_spectrum.csv", overwrite, variant=label))
        idx = local_maxima(ds.omega_grid, ds.final, window=window)
        top = float(ds.omega_grid[idx[np.argmax(ds.final[idx])]]) if len(idx) else float("nan")
        summary.append((label, len(idx), top))
    meta = {"config": {"run": cfg.resolved()}, "code_version": __version__, "window": list(window),
            "variants": [s[0] for s in summary]}
    rows = [(i, n, w) for i, (_, n, w) in enumerate(summary)]
    res.files.append(write_table(out / "aea_summary.csv", ("variant_index", "n_maxima", "dominant_omega"), rows, meta, overwrite))


RUNNERS = {
    "spectrum": _run_spectrum,
    "timemap": _run_timemap,
    "levels": _run_levels,
    "dicke-critical": _run_dicke,
    "array-scaling": _run_array_scaling,
    "motion": _run_motion,
    "ehrenfest": _run_ehrenfest,
    "aea-compare": _run_aea_compare,
}


def run(cfg: RunConfig, out, workers: int = 1, overwrite: bool = False) -> RunResult:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    res = RunResult()
    RUNNERS[cfg.experiment](cfg, out, max(1, int(workers)), overwrite, res)
    return res


# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mpfluor", description="Fluorescence spectra of matter in quantized fields.")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", type=Path, help="JSON run configuration")
    src.add_argument("--preset", help="name of a shipped preset (see --list-presets)")
    p.add_argument("--out", type=Path, help="output directory (default: config 'output' or ./results/<name>)")
    p.add_argument("--workers", type=int, default=1, help="worker processes for frequency scans")
    p.add_argument("--force-overwrite", action="store_true", help="replace existing output files")
    p.add_argument("--list-presets", action="store_true")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.list_presets:
        print("\n".join(preset_names()))
        return EXIT_OK
    if not (args.config or args.preset):
        print("error: one of --config or --preset is required", file=sys.stderr)
        return EXIT_CONFIG
    if args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.config:
            try:
                data = json.loads(args.config.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"config: cannot read {args.config}: {exc}") from exc
        else:
            data = load_preset(args.preset)
        cfg = parse_config(data)
    except SpecError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or Path(cfg.output or Path("results") / cfg.name)
    try:
        res = run(cfg, out, args.workers, args.force_overwrite)
    except OutputExistsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXISTS
    except SpecError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for f in res.files:
        print(f)
    if res.failed:
        print("failed points:", file=sys.stderr)
        for label, point, msg in res.failed:
            print(f"  {label} {point:g}: {msg}", file=sys.stderr)
        return EXIT_FAILED_POINTS
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
