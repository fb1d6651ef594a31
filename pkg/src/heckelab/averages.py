"""Galois averages of twisted central values and the experiments built on them.

For phi primitive mod p^n, r prime to p and G the orbit {phi^t : t = 1 mod p^n0},

    L_av(f, phi, r) = 1/(|G| p^n) sum_{a = c_phi (p^n0)} e(a/p^n)
                          sum_s conj(phi^s)(a r) G(phi^s) L(k/2, f x phi^s).

Opening each L(k/2, .) with the approximate functional equation gives
L_av = L_av1 + L_av2, where L_av1 carries the orbit average G_av(phi, m/r)
and L_av2 the dual average G_av^iota(phi, r m).  The main term of L_av1 is
a_f(r) r^(-k/2); the reports therefore carry ``recovered = r^(k/2) L_av``,
which tends to a_f(r) as n grows.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .characters import (
    CharacterTable,
    additive_parameter,
    evaluate,
    galois_orbit,
    g_average_iota_table,
    g_average_table,
    gauss_sum,
    partial_gauss_sum,
    support_predicate,
    unit_roots,
)
from .lfunctions import (
    InsufficientCoefficients,
    _summands,
    afe_terms_needed,
    afe_value,
    form_sign,
)
from .newforms import CoefficientSeries, get_series, resolve
from .numerics import DEFAULT_KERNEL, SmoothingKernel

DEFAULT_TOL = 1e-10


def schedule_y(p: int, n: int) -> float:
    """The cutoff schedule y = p^(55 n / 39)."""
    return float(p) ** (55.0 * n / 39.0)


def _check_inputs(series: CoefficientSeries, phi: CharacterTable, r: int, n0: int):
    if r < 1 or math.gcd(r, phi.p) != 1:
        raise ValueError(f"r={r} must be a positive integer coprime to p={phi.p}")
    if math.gcd(series.level, phi.p) != 1:
        raise ValueError(f"level {series.level} is not coprime to p={phi.p}")
    if phi.n <= n0:
        raise ValueError(f"conductor exponent n={phi.n} must exceed n0={n0}")


def ensure_series(f, conductor: int, y: float, tol: float, cache_dir=None,
                  ker: SmoothingKernel = DEFAULT_KERNEL) -> CoefficientSeries:
    """A series long enough for the AFE at (conductor, y, tol).

    ``f`` is a label or a series; a registered series that is too short is
    re-fetched with the required bound.
    """
    if isinstance(f, str):
        k = resolve(f).spec.weight
        need = max(afe_terms_needed(k, conductor, k / 2, y, tol, ker))
        return get_series(f, max(need, 1), cache_dir)
    need = max(afe_terms_needed(f.weight, conductor, f.weight / 2, y, tol, ker))
    if need <= f.bound:
        return f
    try:
        resolve(f.label)
    except KeyError:
        raise InsufficientCoefficients(need, f.bound) from None
    return get_series(f.label, need, cache_dir)


@dataclass(frozen=True)
class AverageReport:
    form: str
    p: int
    n: int
    n0: int
    r: int
    phi_exponent: int
    y: float
    value: complex
    target: int
    weight: int
    split: tuple[complex, complex] | None = None
    tail_estimate: float = 0.0
    orbit_size: int = 1
    flags: tuple[str, ...] = ()

    @property
    def recovered(self) -> complex:
        """r^(k/2) L_av, the quantity that tends to a_f(r)."""
        return self.value * self.r ** (self.weight / 2)

    @property
    def abs_error(self) -> float:
        return abs(self.recovered - self.target)

    @property
    def rel_error(self) -> float:
        return self.abs_error / abs(self.target) if self.target else float("inf")

    def split_mismatch(self) -> float | None:
        if self.split is None:
            return None
        return abs(self.value - sum(self.split)) / (1 + abs(self.value))


def orbit_lvalues(series, phi, n0, y, tol, ker=DEFAULT_KERNEL, threads: int = 1):
    """L(k/2, f x phi^s) for every orbit member, in orbit order."""
    k = series.weight
    orbit = galois_orbit(phi, n0)

    def one(chi):
        return afe_value(series, chi, k / 2, y=y, tol=tol, ker=ker)

    if threads > 1 and len(orbit) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, orbit))
    else:
        results = [one(chi) for chi in orbit]
    return orbit, results


def l_average(
    f,
    phi: CharacterTable,
    r: int,
    n0: int = 1,
    y: float | None = None,
    tol: float = DEFAULT_TOL,
    ker: SmoothingKernel = DEFAULT_KERNEL,
    threads: int = 1,
    with_split: bool = True,
    cache_dir=None,
) -> AverageReport:
    """L_av(f, phi, r) with orbit L-values computed once each.

    The a-sum collapses to the partial Gauss sum of conj(phi^s) over the
    class of c_phi, so each orbit member costs one L-value.
    """
    Q = _conductor(f, phi)
    y = schedule_y(phi.p, phi.n) if y is None else float(y)
    series = ensure_series(f, Q, y, tol, cache_dir, ker)
    _check_inputs(series, phi, r, n0)
    k = series.weight
    c = additive_parameter(phi, n0).c
    orbit, lvals = orbit_lvalues(series, phi, n0, y, tol, ker, threads)
    total = 0j
    tail = 0.0
    for chi, res in zip(orbit, lvals):
        weight = evaluate(chi.conj(), r)[0] * gauss_sum(chi) * partial_gauss_sum(chi.conj(), n0, residue=c)
        total += weight * res.value
        tail += abs(weight) * res.tail_estimate
    norm = len(orbit) * phi.modulus
    value = total / norm
    split = l_average_split(series, phi, r, n0, y, tol, ker) if with_split else None
    flags = tuple(sorted({fl for res in lvals for fl in res.flags}))
    return AverageReport(
        form=series.label,
        p=phi.p,
        n=phi.n,
        n0=n0,
        r=r,
        phi_exponent=phi.e,
        y=y,
        value=complex(value),
        target=series[r],
        weight=k,
        split=split,
        tail_estimate=tail / norm,
        orbit_size=len(orbit),
        flags=flags,
    )


def l_average_literal(f: CoefficientSeries, phi: CharacterTable, r: int, n0: int = 1,
                      y: float | None = None, tol: float = DEFAULT_TOL) -> complex:
    """The defining double sum, term by term (oracle for small p^n)."""
    _check_inputs(f, phi, r, n0)
    k = f.weight
    p, n = phi.p, phi.n
    y = schedule_y(p, n) if y is None else y
    c = additive_parameter(phi, n0).c
    orbit = galois_orbit(phi, n0)
    L = {chi.e: afe_value(f, chi, k / 2, y=y, tol=tol).value for chi in orbit}
    G = {chi.e: gauss_sum(chi) for chi in orbit}
    total = 0j
    for a in range(c % p ** n0, p ** n, p ** n0):
        if a % p == 0:
            continue
        ea = complex(unit_roots(p ** n)[a])
        for chi in orbit:
            total += ea * evaluate(chi.conj(), a * r)[0] * G[chi.e] * L[chi.e]
    return total / (len(orbit) * p ** n)


def _conductor(f, phi: CharacterTable) -> int:
    level = resolve(f).spec.level if isinstance(f, str) else f.level
    return level * phi.p ** (2 * phi.n)


def l_average_split(
    series: CoefficientSeries,
    phi: CharacterTable,
    r: int,
    n0: int,
    y: float,
    tol: float = DEFAULT_TOL,
    ker: SmoothingKernel = DEFAULT_KERNEL,
    prune: bool = False,
) -> tuple[complex, complex]:
    """(L_av1, L_av2) at cutoff y.

    L_av1 = 1/Gamma(k/2, f) sum_m a(m) m^(-k/2) G_av(phi, m/r) V_1(m/y)
    L_av2 = eps/Gamma(k/2, f) sum_m a(m) m^(-k/2) G_av^iota(phi, r m) V_2(m y/Q)

    With ``prune`` the first sum skips the m where G_av vanishes by the
    support criterion.
    """
    _check_inputs(series, phi, r, n0)
    k = series.weight
    p, n = phi.p, phi.n
    q = phi.modulus
    Q = series.level * p ** (2 * n)
    eps = form_sign(series)
    sm = _summands(series, Q, k / 2, y, tol, ker)
    rinv = pow(r, -1, q)
    gav = g_average_table(phi, n0)
    m1 = np.arange(sm.w1.size)
    idx1 = (m1 * rinv) % q
    coeff1 = gav[idx1]
    if prune:
        keep = np.array([support_predicate(p, n, n0, int(a)) for a in range(q)])[idx1]
        L1 = complex(np.sum(sm.w1[keep] * coeff1[keep]))
    else:
        L1 = complex(np.sum(sm.w1 * coeff1))
    giota = g_average_iota_table(phi, n0, series.level)
    m2 = np.arange(sm.w2.size)
    L2 = complex(np.sum(sm.w2 * giota[(r * m2) % q])) * eps
    return L1 / sm.gamma, L2 / sm.gamma


@dataclass(frozen=True)
class ConvergenceTable:
    form: str
    p: int
    r: int
    n0: int
    schedule: str
    rows: tuple[AverageReport, ...]

    def __post_init__(self):
        ns = [row.n for row in self.rows]
        if ns != sorted(set(ns)):
            raise ValueError("rows must be strictly increasing in n")

    @property
    def errors(self) -> list[float]:
        return [row.abs_error for row in self.rows]

    def bend(self) -> int | None:
        """Least n from which the error never increases; None if only the last row."""
        errs = self.errors
        ns = [row.n for row in self.rows]
        start = len(errs) - 1
        while start > 0 and errs[start] <= errs[start - 1]:
            start -= 1
        return ns[start] if start < len(errs) - 1 else None

    def nonincreasing_from(self, n_start: int) -> bool:
        errs = [row.abs_error for row in self.rows if row.n >= n_start]
        return all(b <= a for a, b in zip(errs, errs[1:]))


def convergence_experiment(
    f,
    p: int,
    r: int,
    n0: int = 1,
    n_values=range(2, 7),
    exponent: int = 1,
    tol: float = DEFAULT_TOL,
    y_schedule=None,
    threads: int = 1,
    cache_dir=None,
) -> ConvergenceTable:
    """L_av for phi = the exponent-e character mod p^n, over increasing n."""
    rows = []
    for n in n_values:
        phi = CharacterTable(p, n, exponent)
        y = schedule_y(p, n) if y_schedule is None else y_schedule(p, n)
        rows.append(l_average(f, phi, r, n0, y=y, tol=tol, threads=threads, cache_dir=cache_dir))
    label = rows[0].form if rows else str(f)
    sched = "p^(55n/39)" if y_schedule is None else getattr(y_schedule, "__name__", "custom")
    return ConvergenceTable(label, p, r, n0, sched, tuple(rows))


@dataclass(frozen=True)
class ScanRow:
    form: str
    p: int
    n: int
    phi_exponent: int
    value: complex
    gauss_weighted: float
    tail_estimate: float
    flags: tuple[str, ...]


@dataclass(frozen=True)
class ScanReport:
    form: str
    p: int
    rows: tuple[ScanRow, ...]
    untwisted: complex
    untwisted_lambda: complex
    untwisted_tail: float

    @property
    def minimum(self) -> float:
        return min(row.gauss_weighted for row in self.rows) if self.rows else float("nan")

    @property
    def flagged(self) -> list[ScanRow]:
        return [row for row in self.rows if row.flags]


def nonvanishing_scan(
    f, p: int, n_max: int, tol: float = 1e-10, threads: int = 1, cache_dir=None
) -> ScanReport:
    """|G(phi) L(k/2, f x phi)| for every primitive phi of conductor p^n <= p^n_max.

    A value is flagged when it is below ten times its own tail estimate
    (scaled by |G(phi)|), i.e. when it cannot be told apart from zero.
    """
    from .lfunctions import completed_lambda

    level = resolve(f).spec.level if isinstance(f, str) else f.level
    Q_max = level * p ** (2 * n_max)
    y_max = math.sqrt(Q_max)
    series = ensure_series(f, Q_max, y_max, tol, cache_dir)
    if math.gcd(series.level, p) != 1:
        raise ValueError(f"level {series.level} is not coprime to p={p}")
    k = series.weight
    base = completed_lambda(series, None, k / 2, tol=tol)
    untwisted = afe_value(series, None, k / 2, tol=tol)
    rows = []
    chars = [phi for n in range(2, n_max + 1) for phi in _characters(p, n)]

    def one(phi):
        res = afe_value(series, phi, k / 2, tol=tol)
        g = abs(gauss_sum(phi))
        mag = g * abs(res.value)
        flags = list(res.flags)
        if mag < 10 * g * res.tail_estimate:
            flags.append("below_tail_threshold")
        return ScanRow(series.label, p, phi.n, phi.e, res.value, mag, res.tail_estimate, tuple(flags))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, chars))
    else:
        rows = [one(phi) for phi in chars]
    return ScanReport(series.label, p, tuple(rows), untwisted.value, base.value, untwisted.tail_estimate)


def _characters(p: int, n: int):
    from .characters import enumerate_characters

    return enumerate_characters(p, n)


@dataclass(frozen=True)
class DeterminationRow:
    r: int
    recovered_1: complex
    recovered_2: complex
    coefficient_1: int
    coefficient_2: int

    @property
    def recovered_gap(self) -> float:
        return abs(self.recovered_1 - self.recovered_2)

    @property
    def coefficient_gap(self) -> int:
        return abs(self.coefficient_1 - self.coefficient_2)

    @property
    def discrepancy(self) -> float:
        return abs(self.recovered_gap - self.coefficient_gap)


@dataclass(frozen=True)
class DeterminationReport:
    form_1: str
    form_2: str
    p: int
    n: int
    n0: int
    rows: tuple[DeterminationRow, ...]


def determination_experiment(
    f1, f2, p: int, n: int, n0: int = 1, r_values=(2,), exponent: int = 1,
    tol: float = DEFAULT_TOL, threads: int = 1, cache_dir=None,
) -> DeterminationReport:
    """Recovered coefficients of two forms from the same family of averages."""
    w1 = resolve(f1).spec.weight if isinstance(f1, str) else f1.weight
    w2 = resolve(f2).spec.weight if isinstance(f2, str) else f2.weight
    if w1 != w2:
        raise ValueError("forms must have the same weight")
    phi = CharacterTable(p, n, exponent)
    rows = []
    for r in r_values:
        a = l_average(f1, phi, r, n0, tol=tol, threads=threads, with_split=False, cache_dir=cache_dir)
        b = l_average(f2, phi, r, n0, tol=tol, threads=threads, with_split=False, cache_dir=cache_dir)
        rows.append(DeterminationRow(r, a.recovered, b.recovered, a.target, b.target))
    name = lambda f: f if isinstance(f, str) else f.label
    return DeterminationReport(name(f1), name(f2), p, n, n0, tuple(rows))
