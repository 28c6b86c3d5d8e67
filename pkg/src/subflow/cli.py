"""Command-line driver: ``subflow <command> --config path [--a.b=value ...]``.

Exit codes: 0 success, 2 a standing assumption fails, 3 numerical failure,
4 configuration error.  Outputs are collected in memory and written
atomically at the end, so a failed run leaves nothing behind.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from . import config as cfgmod
from .config import DEFAULT_PROFILES, canonical_json, config_hash, expand_grid
from .discrepancy import StepFunction, discrepancy_fit
from .erdos_kahane import dimension_bound, ek_trace, ekn_membership
from .errors import (AssumptionViolation, ConfigError, MeanNotZero, ParseError, SchemaError,
                     SubflowError)
from .perron import EigenSystem, eigen_system, param_point, vandermonde_constants
from .product import PartnerFlow, product_correlation_decay
from .spectral import (exponent_budget, fejer_mass, orbit_correlation, select_onset,
                       twisted_sup, varr_certificate)
from .substitution import (Substitution, find_return_word, parse_substitution,
                           substitution_matrix, validate_assumptions)
from .suspension import CylFunction, RoofVector, orbit_with_length

COMMANDS = ("analyze", "return-word", "spectrum", "ek", "discrepancy", "product", "certify")
EXIT_OK, EXIT_ASSUMPTION, EXIT_NUMERIC, EXIT_CONFIG = 0, 2, 3, 4


# --------------------------------------------------------------------------
# output handling

def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class Outputs:
    """Named text artifacts, committed to disk atomically."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.hash = config_hash(cfg)
        self.files: dict[str, str] = {}

    def csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
        buf.write(f"# config-hash: {self.hash}\n")
        self.files[name] = buf.getvalue()

    def json(self, name: str, obj: Any) -> None:
        self.files[name] = json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"

    def commit(self, outdir: Path) -> list[Path]:
        outdir.mkdir(parents=True, exist_ok=True)
        self.files["config.resolved.json"] = canonical_json(self.cfg)
        written: list[Path] = []
        try:
            for name in sorted(self.files):
                target = outdir / name
                fd, tmp = tempfile.mkstemp(dir=outdir, prefix=f".{name}.", suffix=".tmp")
                try:
                    with os.fdopen(fd, "w", newline="") as fh:
                        fh.write(self.files[name])
                    os.replace(tmp, target)
                except BaseException:
                    if os.path.exists(tmp):
                        os.unlink(tmp)
                    raise
                written.append(target)
        except BaseException:
            for p in written:
                p.unlink(missing_ok=True)
            raise
        return written


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("SUBFLOW_THREADS", "1")))
    except ValueError:
        return 1


def parallel_map(fn: Callable, items: Sequence) -> list:
    """Order-preserving map; results never depend on the thread count."""
    n = min(thread_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# shared setup

@dataclass
class Setup:
    cfg: dict
    sub: Substitution
    es_or_error: EigenSystem | SubflowError
    roof_or_error: RoofVector | SubflowError

    @property
    def es(self) -> EigenSystem:
        if isinstance(self.es_or_error, SubflowError):
            raise self.es_or_error
        return self.es_or_error

    @property
    def roof(self) -> RoofVector:
        if isinstance(self.roof_or_error, SubflowError):
            raise self.roof_or_error
        return self.roof_or_error

    @property
    def s(self) -> np.ndarray:
        return self.roof.s

    @property
    def freq(self) -> np.ndarray:
        return self.es.frequencies()

    def function(self) -> CylFunction:
        spec = dict(self.cfg["function"])
        if "psi" not in spec:
            spec["psi"] = {c: {"knots": DEFAULT_PROFILES[i % len(DEFAULT_PROFILES)]}
                           for i, c in enumerate(self.sub.letters)}
        try:
            return CylFunction.from_json(spec, self.sub.letters, self.s, self.freq)
        except ValueError as exc:
            raise SchemaError(f"function: {exc}") from exc

    def constant(self, key: str):
        return self.cfg["constants"][key]


def setup(cfg: dict) -> Setup:
    try:
        sub = parse_substitution(cfg["substitution"])
    except ValueError as exc:
        raise SchemaError(f"substitution: {exc}") from exc
    try:
        es = eigen_system(substitution_matrix(sub))
    except SubflowError as exc:
        # analyze still reports on such substitutions; other commands fail at the gate
        es = exc
    roof_spec = cfg["roof"]
    if roof_spec == "perron":
        roof = RoofVector.perron(es) if isinstance(es, EigenSystem) else es
    elif isinstance(roof_spec, dict):
        roof = RoofVector.random(sub.m, int(roof_spec["random"]))
    else:
        if len(roof_spec) != sub.m:
            raise SchemaError(f"roof: expected {sub.m} entries, got {len(roof_spec)}")
        try:
            roof = RoofVector.explicit(roof_spec)
        except ValueError as exc:
            raise SchemaError(f"roof: {exc}") from exc
    return Setup(cfg, sub, es, roof)


def gate(st: Setup):
    report = validate_assumptions(st.sub, st.constant("complexity_depth"))
    if not report.all_hold:
        raise AssumptionViolation("; ".join(report.failures()))
    return report


# --------------------------------------------------------------------------
# commands

def cmd_analyze(st: Setup, out: Outputs) -> None:
    report = validate_assumptions(st.sub, st.constant("complexity_depth"))
    info = report.as_dict()
    info["substitution"] = st.sub.describe()
    info["matrix"] = substitution_matrix(st.sub)
    try:
        info["frequencies"] = st.freq
        info["roof"] = {"s": st.s, "provenance": st.roof.provenance}
        if report.second_eigenvalue_expanding:
            info["beta"] = st.es.beta
        vd = vandermonde_constants(st.es)
        info["vandermonde"] = {"norm": vd.norm, "norm_inv": vd.norm_inv, "rho": vd.rho, "L": vd.L}
    except SubflowError as exc:
        info["eigen_error"] = f"{type(exc).__name__}: {exc}"
    out.json("assumptions.json", info)
    ev = report.eigenvalues
    out.csv("eigen.csv", ["j", "re", "im", "modulus"],
            ((j + 1, z.real, z.imag, abs(z)) for j, z in enumerate(ev)))


def cmd_return_word(st: Setup, out: Outputs) -> None:
    rw = find_return_word(st.sub, st.constant("ell_max"))
    p = param_point(st.s, rw, st.es)
    out.json("return_word.json", {"v": st.sub.format(rw.v), "c": st.sub.letters[rw.c],
                                  "power": rw.power})
    out.csv("param.csv", ["j", "b_re", "b_im", "a_re", "a_im"],
            ((j + 1, b.real, b.imag, a.real, a.imag) for j, (b, a) in enumerate(zip(p.b, p.a))))


def _spectrum(st: Setup, out: Outputs) -> list:
    cfg = st.cfg
    f = st.function()
    theta = st.es.theta
    omegas = expand_grid(cfg["grids"]["omega"])
    R = expand_grid(cfg["grids"]["R"], theta)
    R_fejer = expand_grid(cfg["grids"]["R_fejer"], theta)
    seed = cfg["seeds"]
    orbit = orbit_with_length(st.sub, st.s, 4 * max(R[-1], R_fejer[-1]), freq=st.freq)

    mass_omegas = np.unique(np.concatenate([[0.0], omegas]))
    G = fejer_mass(f, orbit, mass_omegas, R_fejer, cfg["samples"]["fejer"], seed)
    out.csv("mass.csv", ["omega", "R", "G"],
            ((om, r, g) for om, row in zip(mass_omegas, G) for r, g in zip(R_fejer, row)))

    nonzero = [om for om in omegas if om != 0]

    def one(om):
        sup = twisted_sup(f, orbit, [om], R, cfg["samples"]["sup"], seed)[0]
        R0 = select_onset(R, sup, st.constant("max_residual"))
        return sup, varr_certificate(R, sup, R0, om)

    results = parallel_map(one, nonzero)
    out.csv("sup.csv", ["omega", "R", "sup"],
            ((om, r, v) for om, (sup, _) in zip(nonzero, results) for r, v in zip(R, sup)))
    certs = [c for _, c in results]
    out.json("certificate.json", {"certificates": [c.as_dict() for c in certs],
                                  "f_lipschitz_norm": f.lipschitz_norm()})
    return certs


def cmd_spectrum(st: Setup, out: Outputs) -> None:
    gate(st)
    _spectrum(st, out)


def cmd_ek(st: Setup, out: Outputs) -> None:
    gate(st)
    cfg = st.cfg
    vd = vandermonde_constants(st.es)
    rw = find_return_word(st.sub, st.constant("ell_max"))
    p = param_point(st.s, rw, st.es)
    omegas = expand_grid(cfg["grids"]["omega"])
    N = cfg["grids"]["N"]
    B = st.constant("B")
    rows = []
    for om in omegas:
        tr = ek_trace(om, p, st.es, N["trace"], vd, B=B, n_min_factor=st.constant("n_min_factor"))
        rows.extend((om, n, float(x), int(k), e) for n, x, k, e in zip(tr.n, tr.x, tr.K, tr.eps))
    out.csv("ek.csv", ["omega", "n", "x_n", "K_n", "eps_n"], rows)
    stats_rows = []
    for om in omegas:
        stt = ekn_membership(p, om, vd.rho, N["membership"], st.constant("k"), B, st.es, vd,
                             st.constant("n_min_factor"), dps=st.constant("ek_dps"))
        stats_rows.append((om, *st.s, stt.bad_count, stt.member, stt.below_n_min))
    out.csv("ekstats.csv", ["omega", *[f"s_{c}" for c in st.sub.letters], "bad_count", "member",
                            "below_n_min"], stats_rows)
    dims = [dimension_bound(k, U, st.es, vd) for k in cfg["grids"]["k"] for U in cfg["grids"]["Upsilon"]]
    out.csv("dimension.csv", ["k", "Upsilon", "eta_max", "feasible"],
            ((d.k, d.Upsilon, d.eta_max, d.feasible) for d in dims))


def cmd_discrepancy(st: Setup, out: Outputs) -> None:
    gate(st)
    cfg = st.cfg
    d = cfg["step_function"]
    if d is None:
        d = [1.0] + [0.0] * (st.sub.m - 1)
    if len(d) != st.sub.m:
        raise SchemaError(f"step_function: expected {st.sub.m} values")
    F = StepFunction.centered(d, st.freq)
    N = cfg["grids"]["N"]
    series = discrepancy_fit(F, st.sub, N["discrepancy_max"], N["discrepancy_min"], es=st.es)
    out.csv("discrepancy.csv", ["N", "D", "slope_running"],
            zip(series.checkpoints, series.values, series.running_slope()))
    out.json("discrepancy_fit.json", {"slope": series.slope, "residual": series.fit.residual,
                                      "beta": st.es.beta, "d": F.d.real})


def _budget(st: Setup):
    vd = vandermonde_constants(st.es)
    return exponent_budget(st.es, vd, st.constant("k"), st.constant("Upsilon"),
                           st.constant("c1"), st.constant("beta_tilde"))


def cmd_product(st: Setup, out: Outputs) -> None:
    gate(st)
    cfg = st.cfg
    f = st.function()
    t = cfg["grids"]["t"]
    corr = orbit_correlation(f, st.sub, st.s, t["t_max"], t["dt"], t["T"], seed=cfg["seeds"],
                             n_samples=cfg["samples"]["correlation"], freq=st.freq)
    out.csv("correlation.csv", ["t", "re", "im"], zip(corr.t, corr.values.real, corr.values.imag))
    pspec = cfg["partner"]
    partner = PartnerFlow(pspec["kind"], tuple(pspec["alphas"]))
    R = expand_grid(cfg["grids"]["R_product"], st.es.theta)
    budget = _budget(st)
    pc = product_correlation_decay(corr, partner, R, budget=budget)
    out.csv("product.csv", ["R", "re_I", "im_I", "abs_I", "running_slope"],
            zip(pc.R, pc.I.real, pc.I.imag, np.abs(pc.I), pc.running_slope()))
    out.json("product_fit.json", {
        "slope": pc.fit.slope if pc.fit else None,
        "residual": pc.fit.residual if pc.fit else None,
        "alpha_emp": pc.alpha_emp,
        "predicted_slope_bound": pc.predicted_slope,
        "consistent": pc.consistent,
        "cauchy_schwarz_holds": pc.cs_holds(),
    })


def cmd_certify(st: Setup, out: Outputs) -> None:
    cmd_analyze(st, out)
    gate(st)
    certs = _spectrum(st, out)
    budget = _budget(st)
    out.json("budget.json", budget.as_dict())
    out.json("compare.json", {"gamma_final": budget.gamma_final, "comparisons": [
        {"omega": c.omega, "gamma_empirical": c.gamma,
         "empirical_at_least_theory": c.gamma >= budget.gamma_final,
         "fit_residual": c.fit.residual} for c in certs]})


DISPATCH = {
    "analyze": cmd_analyze,
    "return-word": cmd_return_word,
    "spectrum": cmd_spectrum,
    "ek": cmd_ek,
    "discrepancy": cmd_discrepancy,
    "product": cmd_product,
    "certify": cmd_certify,
}


def dispatch(cfg: dict) -> Outputs:
    command = cfg["command"]
    if command not in DISPATCH:
        raise ConfigError(f"unknown command {command!r}")
    out = Outputs(cfg)
    DISPATCH[command](setup(cfg), out)
    return out


# --------------------------------------------------------------------------
# entry point

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _split_overrides(extra: Sequence[str]) -> list:
    out, i = [], 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise ParseError(f"unexpected argument {tok!r}")
        if "=" in tok:
            out.append(cfgmod.parse_override(tok))
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ParseError(f"override {tok!r} has no value")
            out.append(cfgmod.parse_override(tok, extra[i + 1]))
            i += 2
    return out


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (AssumptionViolation, MeanNotZero)):
        return EXIT_ASSUMPTION
    return EXIT_NUMERIC


def main(argv: Sequence[str] | None = None) -> int:
    parser = _Parser(prog="subflow", description=__doc__.splitlines()[0])
    parser.add_argument("command", help="one of: " + ", ".join(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON experiment configuration")
    parser.add_argument("--output", help="output directory (overrides the config)")
    args, extra = parser.parse_known_args(argv)

    if args.command not in COMMANDS:
        print(f"subflow: unknown command {args.command!r}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        overrides = _split_overrides(extra)
        overrides.append((["command"], args.command))
        if args.output:
            overrides.append((["output"], args.output))
        cfg = cfgmod.load_config(args.config, overrides)
        out = dispatch(cfg)
        written = out.commit(Path(cfg["output"]))
    except SubflowError as exc:
        print(f"subflow: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code(exc)
    except (ValueError, FloatingPointError) as exc:
        print(f"subflow: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for p in written:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
