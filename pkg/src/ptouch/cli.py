"""Command-line surface: reproducible batch runs driven by a config file.

Usage:
    ptouch <subcommand> <config-file> [--output DIR]

Subcommands: constants, generate, verify, envelope, measure, exponent,
lemma, cz, iterate.  Exit codes: 0 pass, 1 assertion failure,
2 hypothesis-not-met, 3 usage/config error.

The config format is flat ``key = value`` pairs under section headers;
unknown sections or keys are rejected.  Identical config and seed produce
byte-identical CSV outputs; every run writes a JSON manifest recording the
config, seed, tool version, worker count and wall time.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .constants import compute_constants
from .envelope import min_touch_opening, touchable_mask
from .errors import ConfigError, PTouchError
from .experiments import (
    Status,
    calibrate_seed_scale,
    cz_decompose,
    derive_surrogate,
    fit_exponent,
    iterate_decay,
    measure_bad_set,
    verify_localization,
    verify_measure_lemma,
    verify_strong_measure_lemma,
    verify_touching,
)
from .generators import (
    BarrierParams,
    CoefficientRecipe,
    barrier,
    boundary_descriptor,
    cone,
    quadratic,
    radial_power,
    strong_supersolution,
)
from .grid import DomainSpec, GridFunction, GridMask, grid_over_cube, mask_of_domain, measure, write_pgrid
from .pucci import EllipticityParams, verify_supersolution

WORKERS_ENV = "PTOUCH_WORKERS"

_SCHEMA = {
    "run": {"seed", "resolution", "side", "dim", "output", "label"},
    "ellipticity": {"n", "lam", "Lam"},
    "constants": {"n_values", "ratios"},
    "generator": {"kind", "seed", "boundary", "beta", "sign", "quad_diag", "apex", "forcing"},
    "ladder": {"t_min", "t_max", "points_per_decade"},
    "lemma": {"name"},
    "envelope": {"opening"},
    "cz": {"delta", "instances", "resolution"},
    "iterate": {"k_max", "surrogate", "sigma_target"},
    "tolerances": {"cert_tol", "touch_tol"},
}

_STRONG_KINDS = ("constant", "checkerboard", "random-rotation", "radial-anisotropic")


@dataclass
class RunConfig:
    raw: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None)
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file {path!r} not found or empty")
        raw: dict = {}
        for section in parser.sections():
            if section not in _SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            raw[section] = {}
            for key, value in parser.items(section):
                if key not in _SCHEMA[section]:
                    raise ConfigError(f"unknown key {key!r} in section [{section}]")
                raw[section][key] = value
        cfg = cls(raw=raw)
        if cfg.resolution() < 33:
            raise ConfigError("resolution must be at least 33 nodes per axis")
        return cfg

    def get(self, section: str, key: str, default=None, cast=str):
        try:
            value = self.raw[section][key]
        except KeyError:
            return default
        try:
            if cast is bool:
                return value.strip().lower() in ("1", "true", "yes", "on")
            return cast(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for [{section}] {key}: {value!r}") from exc

    def seed(self) -> int:
        return self.get("run", "seed", 0, int)

    def resolution(self) -> int:
        return self.get("run", "resolution", 65, int)

    def ellipticity(self) -> EllipticityParams:
        return EllipticityParams(
            n=self.get("ellipticity", "n", 2, int),
            lam=self.get("ellipticity", "lam", 1.0, float),
            Lam=self.get("ellipticity", "Lam", 1.0, float),
        )

    def ladder(self) -> np.ndarray:
        t_min = self.get("ladder", "t_min", 1.0, float)
        t_max = self.get("ladder", "t_max", 256.0, float)
        ppd = self.get("ladder", "points_per_decade", 8, int)
        if not (0 < t_min < t_max) or ppd < 1:
            raise ConfigError("ladder must satisfy 0 < t_min < t_max with >= 1 point/decade")
        count = max(2, int(math.ceil(math.log10(t_max / t_min) * ppd)) + 1)
        return np.geomspace(t_min, t_max, count)


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def write_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        path.write_text("")
        return
    header = list(rows[0].keys())
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(row[k]) for k in header))
    path.write_text("\n".join(lines) + "\n")


def _build_grid(cfg: RunConfig, default_side: float):
    side = cfg.get("run", "side", default_side, float)
    dim = cfg.get("run", "dim", cfg.ellipticity().n, int)
    return grid_over_cube(side, cfg.resolution(), dim=dim), side


def _generate(cfg: RunConfig, spec):
    """Build the configured test function; returns (v, coefficient or None)."""
    p = cfg.ellipticity()
    kind = cfg.get("generator", "kind", "cone")
    gseed = cfg.get("generator", "seed", cfg.seed(), int)
    if kind in _STRONG_KINDS:
        recipe = CoefficientRecipe(kind=kind, p=p, seed=gseed)
        bname = cfg.get("generator", "boundary", "randquad")
        bdata = boundary_descriptor(bname, seed=gseed, dim=spec.dim)
        result = strong_supersolution(recipe, bdata, spec)
        return result.v, result.a
    if kind == "cone":
        apex_raw = cfg.get("generator", "apex")
        apex = None
        if apex_raw:
            apex = tuple(float(x) for x in apex_raw.split(","))
        return cone(spec, apex=apex), None
    if kind == "quadratic":
        diag_raw = cfg.get("generator", "quad_diag", ",".join(["-1"] * spec.dim))
        diag = [float(x) for x in diag_raw.split(",")]
        if len(diag) != spec.dim:
            raise ConfigError("quad_diag length must match the dimension")
        return quadratic(np.diag(diag), spec), None
    if kind == "radial-power":
        beta = cfg.get("generator", "beta", 1.0, float)
        sign = cfg.get("generator", "sign", -1, int)
        return radial_power(beta, sign, 4.0 * spec.spacing, spec), None
    if kind == "barrier":
        return barrier(BarrierParams.from_ellipticity(p), spec), None
    raise ConfigError(f"unknown generator kind {kind!r}")


def _status_exit(statuses) -> int:
    statuses = list(statuses)
    if any(s is Status.FAIL for s in statuses):
        return 1
    if any(s is Status.HYPOTHESIS_NOT_MET for s in statuses):
        return 2
    return 0


def _result_line(name: str, status: Status, margin: float) -> str:
    return f"RESULT {name} pass={'true' if status is Status.PASS else 'false'} margin={margin:.17g}"


# --------------------------- subcommand bodies ---------------------------


def _cmd_constants(cfg: RunConfig, out: Path):
    n_values = [int(x) for x in cfg.get("constants", "n_values", "2,3").split(",")]
    ratios = [float(x) for x in cfg.get("constants", "ratios", "1,2,4,8,16").split(",")]
    rows = []
    for n in n_values:
        for ratio in ratios:
            rep = compute_constants(EllipticityParams(n=n, lam=1.0, Lam=ratio))
            rows.append(rep.as_row())
    write_csv(out / "constants.csv", rows)
    print(_result_line("constants", Status.PASS, 0.0))
    return [Status.PASS], ["constants.csv"]


def _cmd_generate(cfg: RunConfig, out: Path):
    spec, _ = _build_grid(cfg, 4.0)
    v, a = _generate(cfg, spec)
    write_pgrid(v, out / "function.pgrid")
    files = ["function.pgrid"]
    print(_result_line("generate", Status.PASS, float(v.sup_norm())))
    return [Status.PASS], files


def _cmd_verify(cfg: RunConfig, out: Path):
    spec, side = _build_grid(cfg, 4.0)
    p = cfg.ellipticity()
    v, _ = _generate(cfg, spec)
    d = DomainSpec.cube(side, dim=spec.dim)
    tol = cfg.get("tolerances", "cert_tol", None, float)
    rep = verify_supersolution(v, d, p, tol)
    rows = [
        {
            "max_violation": rep.max_violation,
            "tol": rep.tol,
            "tested_nodes": rep.tested_nodes,
            "passed": rep.passed,
        }
    ]
    write_csv(out / "verify.csv", rows)
    status = Status.PASS if rep.passed else Status.FAIL
    print(_result_line("verify", status, rep.tol - rep.max_violation))
    return [status], ["verify.csv"]


def _cmd_envelope(cfg: RunConfig, out: Path):
    spec, side = _build_grid(cfg, 4.0)
    v, _ = _generate(cfg, spec)
    d = DomainSpec.cube(side, dim=spec.dim)
    K = cfg.get("envelope", "opening", 32.0, float)
    rep = touchable_mask(v, K, d)
    write_pgrid(rep.mask, out / "touchable.pgrid")
    theta = min_touch_opening(v, d, cfg.ladder())
    write_pgrid(theta, out / "min_opening.pgrid")
    rows = [
        {
            "opening": K,
            "touchable_measure": measure(rep.mask),
            "contact_count": rep.contact_points.size,
            "tol": rep.tol,
            "theta_sentinel": 2.0 * float(cfg.ladder()[-1]),
        }
    ]
    write_csv(out / "envelope.csv", rows)
    print(_result_line("envelope", Status.PASS, measure(rep.mask)))
    return [Status.PASS], ["touchable.pgrid", "min_opening.pgrid", "envelope.csv"]


def _measure_rows(cfg: RunConfig, spec, side):
    v, _ = _generate(cfg, spec)
    d = DomainSpec.cube(side, dim=spec.dim)
    query = DomainSpec.ball(0.5, dim=spec.dim)
    table = measure_bad_set(v, d, query, cfg.ladder())
    rows = [{"t": float(t), "measure": float(m)} for t, m in zip(table.ts, table.measures)]
    return v, d, query, table, rows


def _cmd_measure(cfg: RunConfig, out: Path):
    spec, side = _build_grid(cfg, 2.0)
    _, _, _, table, rows = _measure_rows(cfg, spec, side)
    write_csv(out / "measure.csv", rows)
    monotone = bool(np.all(np.diff(table.measures) <= 1e-15))
    status = Status.PASS if monotone else Status.FAIL
    print(_result_line("measure", status, float(table.measures[0] - table.measures[-1])))
    return [status], ["measure.csv"]


def _cmd_exponent(cfg: RunConfig, out: Path):
    spec, side = _build_grid(cfg, 2.0)
    p = cfg.ellipticity()
    _, _, _, table, rows = _measure_rows(cfg, spec, side)
    rep = compute_constants(p)
    fit_rows = [
        {
            "fitted_exponent": table.fitted_exponent,
            "stderr": table.stderr,
            "residual": table.residual,
            "fit_lo": table.fit_range[0],
            "fit_hi": table.fit_range[1],
            "eps_visc": rep.eps_visc,
            "eps_strong": rep.eps_strong,
            "eps_bound_printed": rep.eps_bound_printed,
            "eps_bound_corrected": rep.eps_bound_corrected,
            "eps_conjectured": rep.eps_conjectured,
        }
    ]
    write_csv(out / "measure.csv", rows)
    write_csv(out / "exponent.csv", fit_rows)
    ok = math.isfinite(table.fitted_exponent)
    status = Status.PASS if ok else Status.FAIL
    print(_result_line("exponent", status, table.fitted_exponent))
    return [status], ["measure.csv", "exponent.csv"]


def _cmd_lemma(cfg: RunConfig, out: Path):
    name = cfg.get("lemma", "name", "measure")
    p = cfg.ellipticity()
    if name in ("measure", "strong"):
        spec, side = _build_grid(cfg, 4.0)
        v, a = _generate(cfg, spec)
        d = DomainSpec.cube(side, dim=spec.dim)
        scaled, K_star = calibrate_seed_scale(v, d, p)
        if name == "strong":
            if a is None:
                raise ConfigError("the strong estimate needs a coefficient-field generator")
            report = verify_strong_measure_lemma(scaled, a, d, p)
        else:
            report = verify_measure_lemma(scaled, d, p)
    elif name == "touching":
        spec, side = _build_grid(cfg, 4.0)
        v, _ = _generate(cfg, spec)
        d = DomainSpec.cube(side, dim=spec.dim)
        v = v.scaled(0.25 / max(v.sup_norm(), 1e-30))
        report = verify_touching(v, d)
    elif name == "localization":
        spec, side = _build_grid(cfg, 6.0)
        v, _ = _generate(cfg, spec)
        d = DomainSpec.cube(side, dim=spec.dim)
        v = v.scaled(0.25 / max(v.sup_norm(), 1e-30) / (8.0 * p.n))
        report = verify_localization(v, d, p)
    else:
        raise ConfigError(f"unknown lemma name {name!r}")
    rows = [{"name": report.name, "status": report.status.value, "margin": report.margin}]
    for key, value in sorted(report.details.items()):
        rows[0][key] = value
    write_csv(out / "lemma.csv", rows)
    print(_result_line(f"lemma-{name}", report.status, report.margin))
    return [report.status], ["lemma.csv"]


def build_cz_instance(resolution: int, delta: float, seed: int, dim: int = 2):
    """Seeded nested masks satisfying the density-dilation hypothesis.

    Random blobs make D; E is D together with the triple dilations of the
    cubes the decomposition selects and their parents (the parents are what
    the ternary measure argument actually consumes).  D is kept inside the
    middle third so no dilation is clipped at the root boundary.
    """
    spec = grid_over_cube(1.0, resolution, dim=dim)
    rng = np.random.default_rng(seed)
    pts = spec.coords()
    flags = np.zeros(spec.shape, dtype=bool)
    for _ in range(int(rng.integers(1, 6))):
        center = rng.uniform(-1.0 / 8.0, 1.0 / 8.0, size=dim)
        radius = rng.uniform(0.01, 0.08)
        flags |= np.sum((pts - center) ** 2, axis=-1) < radius**2
    flags &= np.all(np.abs(pts) < 1.0 / 6.0, axis=-1)
    # Keep |D| strictly below delta |Q1| so the root cube never fires.
    max_count = int(0.9 * delta * spec.node_count)
    idx = np.flatnonzero(flags)
    if idx.size > max_count:
        keep = rng.choice(idx, size=max_count, replace=False)
        flags = np.zeros(spec.shape, dtype=bool)
        flags.reshape(-1)[keep] = True
    D = GridMask(spec, flags)
    probe = cz_decompose(D, GridMask(spec, np.ones(spec.shape, dtype=bool)), delta)
    eflags = flags.copy()
    side = spec.shape[0]
    for lo, width in probe.selected_cubes:
        dlo = [max(l - width, 0) for l in lo]
        dhi = [min(l + 2 * width, side) for l in lo]
        eflags[tuple(slice(a, b) for a, b in zip(dlo, dhi))] = True
        # Parent cube of the selected cube.
        plo = [(l // (3 * width)) * (3 * width) for l in lo]
        eflags[tuple(slice(a, a + 3 * width) for a in plo)] = True
    return D, GridMask(spec, eflags)


def _cmd_cz(cfg: RunConfig, out: Path):
    delta = cfg.get("cz", "delta", 0.3, float)
    instances = cfg.get("cz", "instances", 1, int)
    resolution = cfg.get("cz", "resolution", 81, int)
    rows = []
    statuses = []
    for i in range(instances):
        D, E = build_cz_instance(resolution, delta, seed=cfg.seed() + i)
        result = cz_decompose(D, E, delta)
        statuses.append(result.status)
        rows.append(
            {
                "instance": i,
                "status": result.status.value,
                "conclusion_holds": result.conclusion_holds,
                "selected": result.details["selected"],
                "measure_D": result.details["measure_D"],
                "measure_E": result.details["measure_E"],
                "delta": delta,
            }
        )
        print(_result_line(f"cz-{i}", result.status,
                           delta * result.details["measure_E"] - result.details["measure_D"]))
    write_csv(out / "cz.csv", rows)
    return statuses, ["cz.csv"]


def _cmd_iterate(cfg: RunConfig, out: Path):
    spec, side = _build_grid(cfg, 6.0)
    p = cfg.ellipticity()
    v, _ = _generate(cfg, spec)
    d = DomainSpec.cube(side, dim=spec.dim)
    v = v.scaled(0.25 / max(v.sup_norm(), 1e-30))
    k_max = cfg.get("iterate", "k_max", 2, int)
    use_surrogate = cfg.get("iterate", "surrogate", True, bool)
    if use_surrogate:
        target = cfg.get("iterate", "sigma_target", 0.5, float)
        M_s, sigma_s, _ = derive_surrogate(v, d, p, target=target)
        table = iterate_decay(v, d, p, k_max, M_step=M_s, sigma_step=sigma_s)
    else:
        table = iterate_decay(v, d, p, k_max)
    rows = [
        {
            "k": k,
            "opening": float(table.openings[k]),
            "bad_fraction": float(table.fractions[k]),
            "bound": float(table.bounds[k]),
            "step_ok": bool(table.step_ratio_ok[k]),
        }
        for k in range(table.openings.size)
    ]
    write_csv(out / "iterate.csv", rows)
    status = Status.PASS if table.passed else Status.FAIL
    margin = float(np.min(table.bounds + table.slack - table.fractions))
    print(_result_line("iterate", status, margin))
    return [status], ["iterate.csv"]


_COMMANDS = {
    "constants": (_cmd_constants, "emit the closed-form constants over a parameter grid"),
    "generate": (_cmd_generate, "emit a generated test function as a PGRID file"),
    "verify": (_cmd_verify, "certify a generated function as a supersolution"),
    "envelope": (_cmd_envelope, "emit touchable masks and the minimal-opening field"),
    "measure": (_cmd_measure, "emit the bad-set decay table"),
    "exponent": (_cmd_exponent, "fit the decay exponent and compare to the bounds"),
    "lemma": (_cmd_lemma, "run a named lemma verifier"),
    "cz": (_cmd_cz, "run the cube-decomposition harness"),
    "iterate": (_cmd_iterate, "run the surrogate decay iteration"),
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ptouch",
        description="Paraboloid-touching estimates: generators, certification, experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in _COMMANDS.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("config", help="path to the run configuration file")
        sp.add_argument("--output", help="output directory (overrides [run] output)")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 3 if exc.code not in (0,) else 0

    started = time.time()
    try:
        cfg = RunConfig.load(args.config)
        out = Path(args.output or cfg.get("run", "output", "ptouch-out"))
        out.mkdir(parents=True, exist_ok=True)
        workers = os.environ.get(WORKERS_ENV)
        body, _ = _COMMANDS[args.command]
        statuses, files = body(cfg, out)
        manifest = {
            "command": args.command,
            "config_file": str(args.config),
            "config": cfg.raw,
            "seed": cfg.seed(),
            "version": __version__,
            "workers": int(workers) if workers else 1,
            "wall_time_s": time.time() - started,
            "outputs": files,
            "statuses": [s.value for s in statuses],
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
        return _status_exit(statuses)
    except ConfigError as exc:
        print(f"ERROR usage: {exc}", file=sys.stderr)
        return 3
    except PTouchError as exc:
        print(f"ERROR {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
