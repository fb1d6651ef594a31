"""Command-line interface: ``heckelab <command> [options]``.

Every command accepts ``--config FILE``, a flat text file of ``key = value``
lines (``#`` starts a comment) using the long option names without dashes,
e.g.::

    form = delta
    p = 3
    n = 2..6
    r = 2

Explicit command-line flags win over the config file, which wins over the
built-in defaults.  Errors in the configuration are reported as one JSON
object on stderr, ``{"error": CODE, "message": ...}``, with exit status 2.
"""
from __future__ import annotations

import functools
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import click
from click.core import ParameterSource

from . import __version__
from . import characters as ch
from . import suites
from .averages import (
    convergence_experiment,
    determination_experiment,
    nonvanishing_scan,
)
from .lfunctions import InsufficientCoefficients, afe_value, twisted_fe_residual
from .newforms import (
    MAX_BOUND,
    SeriesBoundError,
    UnknownFormError,
    cached_files,
    default_cache_dir,
    get_series,
    resolve,
)
from .reporting import BASE_COLUMNS, ReportEnvelope, base_row, dumps


class ConfigError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


def parse_int_list(text: str, name: str) -> tuple[int, ...]:
    """'2..6', '2,3,5', '4' or a mix like '1,3..5'."""
    out: list[int] = []
    try:
        for part in str(text).split(","):
            part = part.strip()
            if not part:
                continue
            if ".." in part:
                lo, hi = part.split("..")
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise ConfigError("BAD_VALUE", f"cannot parse --{name} {text!r}") from None
    return tuple(out)


def parse_s_list(text: str) -> tuple[str, ...]:
    vals = tuple(v.strip() for v in str(text).split(",") if v.strip())
    for v in vals:
        if v != "center":
            try:
                complex(v.replace(" ", ""))
            except ValueError:
                raise ConfigError("BAD_VALUE", f"cannot parse --s {v!r}") from None
    return vals


def resolve_s(token: str, k: int) -> complex:
    return complex(k / 2) if token == "center" else complex(token.replace(" ", ""))


def read_config_file(path: str) -> dict[str, str]:
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("CONFIG_UNREADABLE", f"{path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("CONFIG_INVALID", f"{path}:{lineno}: expected key = value")
        key, value = (x.strip() for x in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise ConfigError("CONFIG_INVALID", f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    forms: tuple[str, ...]
    p: int
    n_values: tuple[int, ...]
    n0: int
    r_values: tuple[int, ...]
    tol: float
    y: float | None
    threads: int
    cache_dir: str
    fmt: str
    out: str | None
    strict: bool
    check_fe: bool
    s_values: tuple[str, ...]
    untwisted: bool = False
    levels: tuple[int, ...] = (1, 11)
    sample: int | None = None
    seed: int = 0
    timings: bool = False

    def validate(self, need_forms: bool = True):
        if not ch.is_prime(self.p) or self.p == 2:
            raise ConfigError("P_NOT_ODD_PRIME", f"p={self.p} is not an odd prime")
        if not self.n_values:
            raise ConfigError("N_RANGE_EMPTY", "the n-range is empty")
        if any(n < 1 for n in self.n_values):
            raise ConfigError("N_INVALID", "conductor exponents must be positive")
        if self.n0 < 1:
            raise ConfigError("N0_INVALID", f"n0={self.n0} must be positive")
        if not (0 < self.tol <= 1e-2):
            raise ConfigError("TOL_OUT_OF_RANGE", f"tol={self.tol} must lie in (0, 1e-2]")
        if self.threads < 1:
            raise ConfigError("THREADS_INVALID", "threads must be >= 1")
        for r in self.r_values:
            if r < 1 or math.gcd(r, self.p) != 1:
                raise ConfigError("R_NOT_COPRIME", f"r={r} must be a positive integer coprime to p={self.p}")
        if need_forms:
            if not self.forms:
                raise ConfigError("FORM_MISSING", "no --form given")
            for label in self.forms:
                try:
                    spec = resolve(label).spec
                except UnknownFormError:
                    raise ConfigError("FORM_UNKNOWN", f"unknown form label {label!r}") from None
                if math.gcd(spec.level, self.p) != 1:
                    raise ConfigError("LEVEL_NOT_COPRIME", f"level of {label} is divisible by p={self.p}")

    def echo(self) -> dict:
        d = asdict(self)
        d.pop("timings")
        d.pop("out")
        d.pop("cache_dir")  # location does not change results
        d["forms"] = list(self.forms)
        d["n_values"] = list(self.n_values)
        d["r_values"] = list(self.r_values)
        d["s_values"] = list(self.s_values)
        d["levels"] = list(self.levels)
        return d


CONFIG_KEYS = {
    "form", "p", "n", "n0", "r", "tol", "y", "threads", "cache_dir", "format", "out",
    "strict", "check_fe", "s", "untwisted", "level", "sample", "seed", "timings",
}

DEFAULTS = {
    "form": (),
    "p": 3,
    "n": "2",
    "n0": 1,
    "r": "1",
    "tol": 1e-10,
    "y": None,
    "threads": 1,
    "cache_dir": None,
    "format": "json",
    "out": None,
    "strict": False,
    "check_fe": False,
    "s": "center",
    "untwisted": False,
    "level": (1, 11),
    "sample": None,
    "seed": 0,
    "timings": False,
}


def _truthy(v) -> bool:
    if isinstance(v, bool):
        return v
    return str(v).strip().lower() in ("1", "true", "yes", "on")


def build_config(ctx: click.Context, params: dict) -> ExperimentConfig:
    file_values = read_config_file(params["config"]) if params.get("config") else {}
    merged = {}
    for key, default in DEFAULTS.items():
        src = ctx.get_parameter_source(key) if key in params else None
        explicit = src in (ParameterSource.COMMANDLINE, ParameterSource.ENVIRONMENT)
        if explicit:
            merged[key] = params[key]
        elif key in file_values:
            merged[key] = file_values[key]
        elif key in params and params[key] is not None and src is not None and src != ParameterSource.DEFAULT:
            merged[key] = params[key]
        else:
            merged[key] = default
    forms = merged["form"]
    if isinstance(forms, str):
        forms = tuple(x.strip() for x in forms.split(",") if x.strip())
    levels = merged["level"]
    if isinstance(levels, str):
        levels = parse_int_list(levels, "level")
    cache_dir = merged["cache_dir"] or os.environ.get("HECKELAB_CACHE") or str(default_cache_dir())
    try:
        return ExperimentConfig(
            forms=tuple(forms),
            p=int(merged["p"]),
            n_values=parse_int_list(merged["n"], "n"),
            n0=int(merged["n0"]),
            r_values=parse_int_list(merged["r"], "r"),
            tol=float(merged["tol"]),
            y=None if merged["y"] in (None, "") else float(merged["y"]),
            threads=int(merged["threads"]),
            cache_dir=str(cache_dir),
            fmt=str(merged["format"]),
            out=merged["out"],
            strict=_truthy(merged["strict"]),
            check_fe=_truthy(merged["check_fe"]),
            s_values=parse_s_list(merged["s"]),
            untwisted=_truthy(merged["untwisted"]),
            levels=tuple(int(x) for x in levels),
            sample=None if merged["sample"] in (None, "") else int(merged["sample"]),
            seed=int(merged["seed"]),
            timings=_truthy(merged["timings"]),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError("BAD_VALUE", str(exc)) from None


def diagnostic(code: str, message: str, status: int = 2):
    click.echo(json.dumps({"error": code, "message": message}), err=True)
    sys.exit(status)


def common_options(fn):
    opts = [
        click.option("--form", "form", multiple=True, help="Form label (repeatable): delta, 11a, 14a, 15a, 17a, 37a."),
        click.option("--p", "p", type=int, default=DEFAULTS["p"], show_default=True, help="Odd prime p."),
        click.option("--n", "n", default=DEFAULTS["n"], show_default=True, help="Conductor exponents: 4, 2..6 or 2,3,5."),
        click.option("--n0", "n0", type=int, default=DEFAULTS["n0"], show_default=True, help="Reference depth n0."),
        click.option("--r", "r", default=DEFAULTS["r"], show_default=True, help="Target indices r (list syntax as --n)."),
        click.option("--s", "s", default=DEFAULTS["s"], show_default=True, help="Comma list of s values or 'center'."),
        click.option("--y", "y", type=float, default=None, help="Override the cutoff parameter y."),
        click.option("--tol", "tol", type=float, default=DEFAULTS["tol"], show_default=True, help="Truncation tolerance."),
        click.option("--threads", "threads", type=int, default=DEFAULTS["threads"], show_default=True),
        click.option("--cache-dir", "cache_dir", default=None, help="Coefficient cache directory (env HECKELAB_CACHE)."),
        click.option("--format", "format", type=click.Choice(["json", "csv"]), default="json", show_default=True),
        click.option("--out", "out", default=None, help="Write the report here instead of stdout."),
        click.option("--strict", "strict", is_flag=True, default=False, help="Also fail on summary-level warnings."),
        click.option("--check-fe", "check_fe", is_flag=True, default=False, help="Add functional-equation residuals."),
        click.option("--untwisted", "untwisted", is_flag=True, default=False, help="Add the untwisted value."),
        click.option("--level", "level", default="1,11", show_default=True, help="Levels N for the dual-average bound."),
        click.option("--sample", "sample", type=int, default=None, help="Sample size for (c, d) pairs."),
        click.option("--seed", "seed", type=int, default=0, show_default=True),
        click.option("--timings", "timings", is_flag=True, default=False, help="Include wall-clock timings."),
        click.option("--config", "config", type=click.Path(), default=None, help="Flat key = value config file."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def run_command(name: str, need_forms: bool = True):
    """Wrap a command body: config building, error mapping and emission."""

    def deco(body):
        @functools.wraps(body)
        @click.pass_context
        def wrapper(ctx, **params):
            t0 = time.perf_counter()
            try:
                cfg = build_config(ctx, params)
                cfg.validate(need_forms=need_forms)
                env = body(cfg)
            except ConfigError as exc:
                diagnostic(exc.code, exc.message)
            except InsufficientCoefficients as exc:
                diagnostic("COEFFS_INSUFFICIENT", f"{exc} (maximum bound {MAX_BOUND})")
            except SeriesBoundError as exc:
                diagnostic("COEFFS_INSUFFICIENT", str(exc))
            if cfg.timings:
                env.timings = {"wall_seconds": round(time.perf_counter() - t0, 3)}
            text = env.to_json() if cfg.fmt == "json" else env.to_csv()
            if cfg.out:
                Path(cfg.out).write_text(text)
            else:
                click.echo(text, nl=False)
            failed = bool(env.flags) or (cfg.strict and env.summary.get("warnings"))
            ctx.exit(1 if failed else 0)

        return wrapper

    return deco


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="heckelab")
def main():
    """Twisted central L-values of GL(2) newforms and their Galois averages."""


@main.command("lvalue")
@common_options
@run_command("lvalue")
def cmd_lvalue(cfg: ExperimentConfig) -> ReportEnvelope:
    """L(s, f x phi) for every primitive phi of conductor p^n."""
    cols = BASE_COLUMNS + ("y", "terms_1", "terms_2") + (("fe_residual",) if cfg.check_fe else ())
    env = ReportEnvelope("lvalue", cfg.echo(), columns=cols)
    for label in cfg.forms:
        k = resolve(label).spec.weight
        level = resolve(label).spec.level
        groups = ([None] if cfg.untwisted else []) + list(cfg.n_values)
        series = None
        for token in cfg.s_values:
            s = resolve_s(token, k)
            for n in groups:
                # size the series once per conductor, before touching characters
                Q = level if n is None else level * cfg.p ** (2 * n)
                series = _series_for(label, Q, cfg, s, series)
                chars = [None] if n is None else ch.enumerate_characters(cfg.p, n)
                for phi in chars:
                    res = afe_value(series, phi, s, y=cfg.y, tol=cfg.tol)
                    flags = list(res.flags)
                    row = base_row(label, cfg.p, n, None if phi is None else phi.e, None, s,
                                   res.value, res.tail_estimate, flags)
                    row.update({"y": res.y, "terms_1": res.terms[0], "terms_2": res.terms[1]})
                    if cfg.check_fe:
                        resid = twisted_fe_residual(series, phi, s, tol=cfg.tol)
                        if resid >= 1e-6:
                            flags.append("fe_residual_exceeds_1e-6")
                        row["fe_residual"] = resid
                        row["flags"] = flags
                    env.rows.append(row)
    env.summary = {"rows": len(env.rows)}
    return env


def _series_for(label, Q, cfg, s, held):
    from .lfunctions import afe_terms_needed

    k = resolve(label).spec.weight
    y = math.sqrt(Q) if cfg.y is None else cfg.y
    need = max(afe_terms_needed(k, Q, s, y, cfg.tol))
    if cfg.check_fe:
        for fac in (1.25, 1.6):
            need = max(need, *afe_terms_needed(k, Q, s, fac * math.sqrt(Q), cfg.tol),
                       *afe_terms_needed(k, Q, k - s, fac * math.sqrt(Q), cfg.tol))
    if held is not None and held.bound >= need:
        return held
    return get_series(label, max(need, 1), cfg.cache_dir)


@main.command("identities")
@common_options
@run_command("identities", need_forms=False)
def cmd_identities(cfg: ExperimentConfig) -> ReportEnvelope:
    """Character-average identities, support criterion and bounds."""
    cols = ("check", "p", "n", "n0", "level", "cases", "violations", "max_deviation", "worst", "skipped", "flags")
    env = ReportEnvelope("identities", cfg.echo(), columns=cols)
    results = []
    for n in cfg.n_values:
        results.append(suites.average_identity(cfg.p, n, cfg.n0))
        results.append(suites.support_criterion(cfg.p, n, cfg.n0))
        results.append(suites.kloosterman_bound(cfg.p, n, cfg.n0, sample=cfg.sample, seed=cfg.seed))
        for level in cfg.levels:
            if math.gcd(level, cfg.p) == 1:
                results.append(suites.dual_average_bound(cfg.p, n, cfg.n0, level))
                results.append(suites.root_number_modulus(cfg.p, n, level))
    kl_max = 0.0
    for res in results:
        flags = [f"{res.violations} violations"] if res.violations else []
        env.rows.append({
            "check": res.check, "p": res.p, "n": res.n, "n0": res.n0, "level": res.level,
            "cases": res.cases, "violations": res.violations,
            "max_deviation": float(res.max_deviation),
            "worst": ";".join(f"{k}={v}" for k, v in res.worst.items()),
            "skipped": res.skipped, "flags": flags,
        })
        if res.check == "kloosterman_bound":
            kl_max = max(kl_max, res.max_deviation)
    env.summary = {
        "checks": len(results),
        "violations": sum(r.violations for r in results),
        "max_normalized_kloosterman": kl_max,
    }
    return env


@main.command("converge")
@common_options
@run_command("converge")
def cmd_converge(cfg: ExperimentConfig) -> ReportEnvelope:
    """Recovered coefficients r^(k/2) L_av over increasing n (y = p^(55n/39))."""
    extra = ("y", "orbit_size", "target", "recovered_re", "recovered_im", "abs_error", "rel_error",
             "split_1_re", "split_1_im", "split_2_re", "split_2_im")
    env = ReportEnvelope("converge", cfg.echo(), columns=BASE_COLUMNS + extra)
    warnings, tables = [], []
    sched = None if cfg.y is None else (lambda p, n: cfg.y)
    for label in cfg.forms:
        k = resolve(label).spec.weight
        for r in cfg.r_values:
            tab = convergence_experiment(label, cfg.p, r, cfg.n0, cfg.n_values, tol=cfg.tol,
                                         y_schedule=sched, threads=cfg.threads, cache_dir=cfg.cache_dir)
            for row in tab.rows:
                d = base_row(label, row.p, row.n, row.phi_exponent, r, k / 2, row.value,
                             row.tail_estimate, row.flags)
                split = row.split or (None, None)
                d.update({
                    "y": row.y, "orbit_size": row.orbit_size, "target": row.target,
                    "recovered_re": row.recovered.real, "recovered_im": row.recovered.imag,
                    "abs_error": row.abs_error, "rel_error": row.rel_error,
                    "split_1_re": None if split[0] is None else split[0].real,
                    "split_1_im": None if split[0] is None else split[0].imag,
                    "split_2_re": None if split[1] is None else split[1].real,
                    "split_2_im": None if split[1] is None else split[1].imag,
                })
                env.rows.append(d)
            bend = tab.bend()
            tables.append({"form": label, "r": r, "bend": bend,
                           "final_rel_error": tab.rows[-1].rel_error if tab.rows else None})
            if bend is None or bend > tab.rows[0].n + 1:
                warnings.append(f"{label} r={r}: error not eventually non-increasing from n={tab.rows[0].n + 1}")
    env.summary = {"tables": tables, "warnings": warnings}
    return env


@main.command("scan")
@common_options
@run_command("scan")
def cmd_scan(cfg: ExperimentConfig) -> ReportEnvelope:
    """|G(phi) L(k/2, f x phi)| for all phi of conductor up to p^max(n)."""
    extra = ("gauss_weighted",)
    env = ReportEnvelope("scan", cfg.echo(), columns=BASE_COLUMNS + extra)
    summaries = []
    for label in cfg.forms:
        k = resolve(label).spec.weight
        rep = nonvanishing_scan(label, cfg.p, max(cfg.n_values), tol=cfg.tol,
                                threads=cfg.threads, cache_dir=cfg.cache_dir)
        untw = base_row(label, cfg.p, None, None, None, k / 2, rep.untwisted, rep.untwisted_tail, [])
        untw["gauss_weighted"] = abs(rep.untwisted)
        env.rows.append(untw)
        for row in rep.rows:
            d = base_row(label, row.p, row.n, row.phi_exponent, None, k / 2, row.value,
                         row.tail_estimate, row.flags)
            d["gauss_weighted"] = row.gauss_weighted
            env.rows.append(d)
        summaries.append({"form": label, "characters": len(rep.rows), "minimum": rep.minimum,
                          "flagged": len(rep.flagged), "untwisted_abs": abs(rep.untwisted),
                          "untwisted_lambda_abs": abs(rep.untwisted_lambda)})
    env.summary = {"forms": summaries}
    return env


@main.command("determine")
@common_options
@run_command("determine")
def cmd_determine(cfg: ExperimentConfig) -> ReportEnvelope:
    """Compare recovered coefficients of two forms (give --form twice)."""
    if len(cfg.forms) != 2:
        raise ConfigError("FORM_COUNT", "determine needs exactly two --form options")
    cols = ("form_1", "form_2", "p", "n", "r", "recovered_1_re", "recovered_1_im", "recovered_2_re",
            "recovered_2_im", "coefficient_1", "coefficient_2", "recovered_gap", "coefficient_gap",
            "discrepancy", "flags")
    env = ReportEnvelope("determine", cfg.echo(), columns=cols)
    warnings = []
    f1, f2 = cfg.forms
    for n in cfg.n_values:
        rep = determination_experiment(f1, f2, cfg.p, n, cfg.n0, cfg.r_values, tol=cfg.tol,
                                       threads=cfg.threads, cache_dir=cfg.cache_dir)
        for row in rep.rows:
            env.rows.append({
                "form_1": f1, "form_2": f2, "p": cfg.p, "n": n, "r": row.r,
                "recovered_1_re": row.recovered_1.real, "recovered_1_im": row.recovered_1.imag,
                "recovered_2_re": row.recovered_2.real, "recovered_2_im": row.recovered_2.imag,
                "coefficient_1": row.coefficient_1, "coefficient_2": row.coefficient_2,
                "recovered_gap": row.recovered_gap, "coefficient_gap": row.coefficient_gap,
                "discrepancy": row.discrepancy, "flags": [],
            })
            if n == max(cfg.n_values) and row.discrepancy > 0.5:
                warnings.append(f"r={row.r}: recovered gap off by {row.discrepancy:.3g}")
    env.summary = {"warnings": warnings}
    return env


@main.group("cache")
def cache_group():
    """Inspect or clear the coefficient cache."""


def _cache_dir_option(fn):
    return click.option("--cache-dir", "cache_dir", default=None,
                        help="Cache directory (env HECKELAB_CACHE).")(fn)


def _cache_dir(value):
    return Path(value or os.environ.get("HECKELAB_CACHE") or default_cache_dir())


@cache_group.command("inspect")
@_cache_dir_option
def cache_inspect(cache_dir):
    """List cached coefficient series."""
    d = _cache_dir(cache_dir)
    entries = [{"file": p.name, "label": lab, "bound": b, "bytes": p.stat().st_size}
               for p, lab, b in cached_files(d)]
    click.echo(dumps({"cache_dir": str(d), "entries": entries}))


@cache_group.command("clear")
@_cache_dir_option
@click.option("--form", "form", default=None, help="Only remove this label.")
def cache_clear(cache_dir, form):
    """Delete cached coefficient series."""
    d = _cache_dir(cache_dir)
    label = resolve(form).spec.label if form else None
    removed = []
    for p, lab, _ in cached_files(d):
        if label is None or lab == label:
            p.unlink()
            removed.append(p.name)
    click.echo(dumps({"cache_dir": str(d), "removed": removed}))


if __name__ == "__main__":  # pragma: no cover
    main()
