"""Command line experiment runner.

Each subcommand reads an optional JSON config (``--config``); command line
flags override it.  Unknown keys are rejected.  Numerical output goes to a
CSV (or JSON for ``energy``) whose '#' header names the tool version, the
experiment and every column.

Exit codes: 0 ok, 2 configuration error, 3 numerical refusal, 4 selftest failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .errors import DivergenceError, DomainError, PointresError, RegimeError

EXIT_OK, EXIT_CONFIG, EXIT_REFUSAL, EXIT_SELFTEST = 0, 2, 3, 4
EXPERIMENTS = ("energy", "zeromass", "expansion", "critical", "mc", "selftest")


class ConfigError(PointresError):
    pass


# ---------------------------------------------------------------------------
# configuration schema


def _float(v):
    if isinstance(v, bool) or not isinstance(v, (int, float, str)):
        raise ConfigError(f"expected a number, got {v!r}")
    try:
        return float(v)
    except ValueError as exc:
        raise ConfigError(f"expected a number, got {v!r}") from exc


def _int(v):
    f = _float(v)
    if f != int(f):
        raise ConfigError(f"expected an integer, got {v!r}")
    return int(f)


def _floats(v):
    if isinstance(v, str):
        v = [x for x in v.split(",") if x.strip()]
    if not isinstance(v, (list, tuple)) or not v:
        raise ConfigError(f"expected a non-empty list of numbers, got {v!r}")
    return [_float(x) for x in v]


def _str(v):
    if not isinstance(v, str):
        raise ConfigError(f"expected a string, got {v!r}")
    return v


def _bool(v):
    if not isinstance(v, bool):
        raise ConfigError(f"expected true or false, got {v!r}")
    return v


def _choice(*options):
    def parse(v):
        v = _str(v)
        if v not in options:
            raise ConfigError(f"expected one of {options}, got {v!r}")
        return v
    return parse


def _float_or(word):
    def parse(v):
        return word if v == word else _float(v)
    return parse


COMMON = {"potential": (_str, "disc"), "output": (_str, None), "seed": (_int, 0)}

SCHEMA: dict[str, dict[str, tuple[Callable, Any]]] = {
    "energy": {"potential": (_str, "phiR:1.01"), "output": (_str, None), "seed": (_int, 0),
               "lambda_prime": (_float, 0.0), "lambda": (_float, 0.0)},
    "zeromass": {**COMMON, "potential": (_str, "-phiR:1.5"), "g": (_str, "disc"), "mu": (_float, 0.5),
                 "lambda_prime": (_float_or("critical"), 0.0), "lambda": (_float, 0.0),
                 "q": (_float_or("scan"), "scan"), "L_grid": (_floats, [4.0, 8.0, 16.0]),
                 "mode": (_choice("auto", "radial", "plane"), "auto"), "tol": (_float, 1e-11)},
    "expansion": {**COMMON, "which": (_choice("asymp_U", "finalI", "Qf"), "finalI"), "mu": (_float, 1.0),
                  "lambda": (_float, 0.0), "q": (_float, 2.0), "a": (_float, 0.5), "b": (_float, 0.5),
                  "L_grid": (_floats, [6.0, 8.0, 12.0]), "M_phi": (_float, None), "order": (_int, 24)},
    "critical": {**COMMON, "lambda": (_float, 0.0), "q": (_float, 20.0), "L_grid": (_floats, [8.0, 12.0, 16.0]),
                 "z_radii": (_floats, [0.1, 0.5, 1.0]), "M_phi": (_float, None), "order": (_int, 16)},
    "mc": {**COMMON, "kind": (_choice("kr", "kk", "fk", "hit"), "kr"), "L": (_float, 3.0), "t": (_float, 1.0),
           "dt": (_float, 0.01), "horizon": (_float, 1e6), "n_paths": (_int, 2000), "mu": (_float, 0.5),
           "lambda_prime": (_float, 0.0), "lambda": (_float, 0.0), "q": (_float, 2.0), "g": (_str, "disc"),
           "nu": (_float, 0.5), "a": (_float, 2.0), "b": (_float, 1.0), "bridge": (_bool, False),
           "dump": (_str, None)},
    "selftest": {"output": (_str, None), "seed": (_int, 0)},
}


def validate(raw: dict) -> dict:
    """Check a config dict against the schema and fill defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    exp = raw.get("experiment")
    if exp not in SCHEMA:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {exp!r}")
    schema = SCHEMA[exp]
    unknown = sorted(set(raw) - set(schema) - {"experiment"})
    if unknown:
        raise ConfigError(f"unknown keys for {exp}: {', '.join(unknown)}")
    out = {"experiment": exp}
    for key, (parse, default) in schema.items():
        if key in raw and raw[key] is not None:
            try:
                out[key] = parse(raw[key])
            except ConfigError as exc:
                raise ConfigError(f"{key}: {exc}") from exc
        else:
            out[key] = default
    return out


# ---------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


@dataclass
class Table:
    experiment: str
    description: str
    columns: dict[str, str]
    rows: list[dict]
    notes: tuple[str, ...] = ()

    def header(self) -> str:
        lines = [f"pointres {__version__}", f"experiment: {self.experiment}", self.description,
                 f"generated: {time.strftime('%Y-%m-%dT%H:%M:%SZ', time.gmtime())}"]
        lines += [f"column {k}: {v}" for k, v in self.columns.items()]
        lines += list(self.notes)
        return "".join(f"# {s}\n" for s in lines)

    def body(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(self.columns))
        for r in self.rows:
            w.writerow([_fmt(r[k]) for k in self.columns])
        return buf.getvalue()

    def write(self, path: str | None) -> str:
        text = self.header() + self.body()
        if path:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return text


def _write_json(obj: dict, path: str | None):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# experiments


def run_energy(cfg: dict) -> int:
    from .logenergy import _direct_brackets, criticality_constants, phi_r_moment
    from .potentials import ZERO_MASS, get_potential

    phi = get_potential(cfg["potential"])
    energy, moment2 = _direct_brackets(phi)
    out = {"version": __version__, "potential": phi.name, "mass_class": phi.mass_class,
           "energy": energy, "moment2_quadrature": moment2}
    if phi.mass_class == ZERO_MASS:
        out["constants"] = criticality_constants(phi, cfg["lambda_prime"], cfg["lambda"]).as_dict()
    else:
        out["mass"] = phi.mass()
    name = cfg["potential"].lstrip("-")
    if name.startswith("phiR:"):
        R = float(name.split(":", 1)[1])
        sign = -1.0 if cfg["potential"].startswith("-") else 1.0
        out["moment1"] = phi_r_moment(R, 1)
        out["moment2"] = sign * phi_r_moment(R, 2)
    _write_json(out, cfg["output"])
    return EXIT_OK


def _schedule(cfg):
    from .logenergy import criticality_constants
    from .potentials import ZERO_MASS, CouplingSchedule, get_potential

    phi = get_potential(cfg["potential"])
    lp = cfg["lambda_prime"]
    if lp == "critical":
        lp = -criticality_constants(phi).c_phi
    return phi, CouplingSchedule(ZERO_MASS, cfg["mu"], cfg["lambda"], lp)


def run_zeromass(cfg: dict) -> int:
    from . import zeromass as zm
    from .potentials import get_potential

    phi, schedule = _schedule(cfg)
    g = get_potential(cfg["g"])
    mode = None if cfg["mode"] == "auto" else cfg["mode"]
    q = cfg["q"]
    # refuse on the regime hypotheses before spending time on the scan
    zm.classify(phi, schedule, max(zm.Q_SCAN) if q == "scan" else q)
    if q == "scan":
        q = zm.scan_q(phi, schedule, g, cfg["L_grid"], mode=mode)
        if q is None:
            raise DivergenceError("no q in the scan gives geometric decay on the whole L-grid")
    rep = zm.limit_verify(phi, schedule, g, q, cfg["L_grid"], mode=mode, tol=cfg["tol"])
    rows = rep.rows()
    for i, r in enumerate(rows):
        r.update(q=rep.q, ratio=float(rep.ratios[i]), iterations=int(rep.iterations[i]),
                 direct_gap=float(rep.direct_gap[i]))
    cols = {
        "L": "log(1/eps)", "eps": "scale parameter", "q": "resolvent rate",
        "normalizer": "regime normalization of F_infinity(0)", "F_at_0": "Picard limit at the origin",
        "predicted": "limit value G_q{g}(0) / regime constant", "residual": "F_at_0/normalizer - predicted",
        "residual_times_rate": "residual * L^(1/2)", "ratio": "fitted per-step decay of Picard differences",
        "iterations": "Picard steps to tolerance", "direct_gap": "relative gap to the direct linear solve",
    }
    Table("zeromass", f"zero-mass resolvent limit ({rep.regime}) for {phi.name}, g = {g.name}, "
          f"mu = {schedule.mu:g}, lambda' = {schedule.lambda_prime:.17g}, lambda = {schedule.lam:g}",
          cols, rows).write(cfg["output"])
    return EXIT_OK


def run_expansion(cfg: dict) -> int:
    from .besselres import expansion_check
    from .potentials import get_potential

    phi = get_potential(cfg["potential"])
    rep = expansion_check(phi, cfg["mu"], cfg["lambda"], cfg["q"], cfg["a"], cfg["b"], cfg["L_grid"],
                          cfg["which"], M_phi=cfg["M_phi"], order=cfg["order"])
    cols = {"L": "log(1/eps)", "eps": "scale parameter", "a": "start radius", "b": "level radius",
            "measured": "numerical value", "predicted": "leading term + coefficient / L",
            "residual": "measured - predicted", "residual_x_logeps": "residual * L"}
    Table("expansion", f"small-eps expansion {cfg['which']} for {phi.name}, mu = {cfg['mu']:g}, "
          f"lambda = {cfg['lambda']:g}, q = {cfg['q']:g}", cols, rep.rows(),
          tuple(f"flag: {f}" for f in rep.flags)).write(cfg["output"])
    return EXIT_OK


def run_critical(cfg: dict) -> int:
    from .besselres import critical_recovery
    from .potentials import get_potential

    phi = get_potential(cfg["potential"])
    rep = critical_recovery(phi, cfg["lambda"], cfg["q"], cfg["L_grid"], cfg["z_radii"],
                            M_phi=cfg["M_phi"], order=cfg["order"])
    rows = []
    for r, rel in zip(rep.rows(), rep.relative_error):
        rows.append({"L": r["L"], "eps": r["eps"], "z": r["a"], "measured": r["measured"],
                     "predicted": r["predicted"], "residual": r["residual"],
                     "residual_x_logeps": r["residual_x_logeps"], "relative_error": float(rel)})
    cols = {"L": "log(1/eps)", "eps": "scale parameter", "z": "evaluation radius",
            "measured": "Lambda^2-scaled resolvent of the cut-off potential",
            "predicted": "2 pi / (m log(q / beta))", "residual": "measured - predicted",
            "residual_x_logeps": "residual * L", "relative_error": "|residual| / predicted"}
    spread = rep.spread()
    notes = tuple(f"spread at L = {k:g}: {v:.6g}" for k, v in spread.items())
    Table("critical", f"critical recovery for {phi.name}, lambda = {cfg['lambda']:g}, q = {cfg['q']:g}",
          cols, rows, notes).write(cfg["output"])
    return EXIT_OK


def run_mc(cfg: dict) -> int:
    from . import montecarlo as mc
    from .potentials import POSITIVE_MASS, ZERO_MASS, CouplingSchedule, get_potential

    pc = mc.PathConfig(cfg["dt"], cfg["horizon"], cfg["n_paths"], cfg["seed"])
    eps = math.exp(-cfg["L"])
    kind = cfg["kind"]
    samples = None
    if kind in ("kr", "kk"):
        phi = get_potential(cfg["potential"])
        want = POSITIVE_MASS if kind == "kr" else ZERO_MASS
        if phi.mass_class != want:
            raise RegimeError(f"{kind} needs a {want.replace('_', '-')} potential")
        samples = mc.additive_functional_samples(phi, eps, cfg["t"], pc)
        ks, s = mc.kr_kk_distribution_check(phi, eps, cfg["t"], pc, samples=samples)
        row = {"L": cfg["L"], "eps": eps, **{k: s[k] for k in ("n", "mean", "stderr", "variance",
                                                                "skewness", "skewness_stderr", "ks")}}
        if kind == "kr" and phi.name == "disc":
            row["oracle_mean"] = mc.kr_mean_oracle(eps, cfg["t"]) * math.pi / (phi.mass() * cfg["L"])
        cols = {"L": "log(1/eps)", "eps": "scale parameter", "n": "paths", "mean": "mean of normalized functional",
                "stderr": "standard error of the mean", "variance": "sample variance",
                "skewness": "sample skewness", "skewness_stderr": "normal-theory skewness stderr",
                "ks": "Kolmogorov-Smirnov distance to the limit law"}
        if "oracle_mean" in row:
            cols["oracle_mean"] = "exact finite-eps mean of the normalized functional"
        desc = f"{kind} limit law for {phi.name}, t = {cfg['t']:g}, dt = {cfg['dt']:g}, seed = {cfg['seed']}"
    elif kind == "fk":
        phi = get_potential(cfg["potential"])
        g = get_potential(cfg["g"])
        sched = CouplingSchedule(phi.mass_class, cfg["mu"], cfg["lambda"],
                                 cfg["lambda_prime"] if phi.mass_class == ZERO_MASS else 0.0)
        est = mc.fk_laplace_estimate(phi, sched, g, cfg["q"], eps, 0j, pc)
        row = {"L": cfg["L"], "eps": eps, "mean": est.mean, "stderr": est.stderr, "n": est.n, "seed": est.seed}
        cols = {"L": "log(1/eps)", "eps": "scale parameter", "mean": "Feynman-Kac Laplace transform at 0",
                "stderr": "standard error", "n": "paths", "seed": "seed"}
        desc = f"Feynman-Kac estimate for {phi.name}, g = {g.name}, q = {cfg['q']:g}, mu = {cfg['mu']:g}"
    else:
        from .besselres import r0_hitting

        est, bias = mc.bessel_hitting_estimate(cfg["nu"], cfg["a"], cfg["b"], pc, bridge=bool(cfg["bridge"]))
        row = {"nu": cfg["nu"], "a": cfg["a"], "b": cfg["b"], "mean": est.mean, "stderr": est.stderr,
               "truncation_bias": bias, "exact": r0_hitting(cfg["nu"], cfg["a"], cfg["b"])}
        cols = {"nu": "killing rate", "a": "start radius", "b": "target radius",
                "mean": "estimated Laplace transform of the hitting time", "stderr": "standard error",
                "truncation_bias": "bound from the finite horizon", "exact": "closed-form Bessel ratio"}
        desc = f"Bessel hitting time, dt = {cfg['dt']:g}, bridge = {bool(cfg['bridge'])}"
    Table("mc", desc, cols, [row]).write(cfg["output"])
    if cfg["dump"] and samples is not None:
        Table("mc", "raw additive functional samples", {"sample": "additive functional"},
              [{"sample": float(x)} for x in samples]).write(cfg["dump"])
    return EXIT_OK


def run_selftest(cfg: dict) -> int:
    from .selftest import run_checks

    results = run_checks()
    rows = [{"check": name, "passed": ok, "value": val, "tolerance": tol} for name, ok, val, tol in results]
    for r in rows:
        print(f"{'PASS' if r['passed'] else 'FAIL'} {r['check']}: {r['value']:.3e} (tol {r['tolerance']:.1e})",
              file=sys.stderr)
    if cfg["output"]:
        Table("selftest", "invariant suite", {"check": "name", "passed": "1 if within tolerance",
              "value": "measured error", "tolerance": "allowed error"}, rows).write(cfg["output"])
    return EXIT_OK if all(r["passed"] for r in rows) else EXIT_SELFTEST


RUNNERS = {"energy": run_energy, "zeromass": run_zeromass, "expansion": run_expansion,
           "critical": run_critical, "mc": run_mc, "selftest": run_selftest}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pointres", description="Point-interaction resolvent experiments.")
    p.add_argument("--version", action="version", version=f"pointres {__version__}")
    sub = p.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file; flags override its values")
        for key in SCHEMA[name]:
            flag = "--" + key.replace("_", "-")
            flags = [flag] + ([flag.lower()] if flag.lower() != flag else [])
            if SCHEMA[name][key][0] is _bool:
                sp.add_argument(*flags, dest=key, action="store_const", const=True, default=None)
            else:
                sp.add_argument(*flags, dest=key, default=None)
    return p


def load_config(args: argparse.Namespace) -> dict:
    raw: dict = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        if raw.get("experiment", args.experiment) != args.experiment:
            raise ConfigError(f"config is for {raw['experiment']!r}, not {args.experiment!r}")
    raw["experiment"] = args.experiment
    for key in SCHEMA[args.experiment]:
        val = getattr(args, key, None)
        if val is not None:
            raw[key] = val
    return validate(raw)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = load_config(args)
        return RUNNERS[cfg["experiment"]](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RegimeError, DivergenceError) as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSAL
    except DomainError as exc:
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
