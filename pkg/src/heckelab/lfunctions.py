"""Twisted L-values by the approximate functional equation.

For f of weight k, level N and functional-equation sign eps, and phi primitive
of conductor p^n with p not dividing N, put Q = N p^(2n).  Then

    Gamma(s, f) L(s, f x phi)
        = sum_m a(m) phi(m) m^-s V_{1,s}(m / y)
          + C Q^(k/2 - s) sum_m a(m) conj(phi)(m) m^-(k-s) V_{2,k-s}(m y / Q)

with C = eps W(phi) and W(phi) = phi(N) G(phi)^2 / p^n.  The untwisted case
is phi = None, Q = N, C = eps.  Both sums are truncated where the Deligne
envelope d(m) m^((k-1)/2 - Re s) |V| of the remaining terms drops below
tol / 10.
"""
from __future__ import annotations

import math
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field, replace

import numpy as np

from .characters import CharacterTable, root_number
from .newforms import CoefficientSeries, divisor_counts
from .numerics import (
    DEFAULT_KERNEL,
    GammaFactorSpec,
    SmoothingKernel,
    cutoff_grid,
    cutoff_V_many,
    gamma_factor,
)

# V / Gamma(s, f) below this is treated as zero when sizing the sums
_DECAY = 1e-30


class InsufficientCoefficients(ValueError):
    """The AFE needs more coefficients than the series holds."""

    def __init__(self, required: int, available: int):
        super().__init__(f"AFE needs {required} coefficients, series has {available}")
        self.required = required
        self.available = available


@dataclass(frozen=True)
class TwistedFESpec:
    """Constants of Lambda(s, f x phi) = C Lambda(k - s, f x conj phi)."""

    root_number: complex
    sign: int
    archimedean_sign: int
    conductor: int

    @property
    def constant(self) -> complex:
        return self.archimedean_sign * self.sign * self.root_number

    def check(self, tol: float = 1e-10) -> bool:
        return abs(abs(self.constant) - 1.0) < tol


@dataclass(frozen=True)
class LValueResult:
    s: complex
    value: complex
    y: float
    terms: tuple[int, int]
    tail_estimate: float
    level: int
    p: int | None = None
    n: int | None = None
    phi_exponent: int | None = None
    flags: tuple[str, ...] = ()
    notes: tuple[str, ...] = ()

    @property
    def conductor(self) -> int:
        if self.p is None:
            return self.level
        return self.level * self.p ** (2 * self.n)


def form_sign(series: CoefficientSeries, sign: int | None = None) -> int:
    eps = series.spec.sign if sign is None else sign
    if eps is None:
        from .newforms import fricke_sign

        eps = fricke_sign(series)
    return int(eps)


def fe_spec(series: CoefficientSeries, phi: CharacterTable | None, sign: int | None = None) -> TwistedFESpec:
    eps = form_sign(series, sign)
    N = series.level
    if phi is None:
        return TwistedFESpec(1.0 + 0j, eps, 1, N)
    if math.gcd(N, phi.p) != 1:
        raise ValueError(f"level {N} is not coprime to p={phi.p}")
    return TwistedFESpec(root_number(phi, N), eps, 1, N * phi.p ** (2 * phi.n))


def _cutoff(j: int, s: complex, x: np.ndarray, ker: SmoothingKernel):
    """Cutoff values and per-point relative error estimates."""
    s = complex(s)
    if s.imag == 0:
        vals, rel = cutoff_grid(j, s.real, ker).evaluate(x)
        return vals.astype(complex), rel
    vals, errs = cutoff_V_many(j, s, x, ker)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(np.abs(vals) > 0, errs / np.abs(vals), 0.0)
    return vals, rel


def _decay_limit(j: int, s: complex, ker: SmoothingKernel) -> float:
    """x beyond which |V_{j,s}(x)| < _DECAY |Gamma(s, f)|."""
    s = complex(s)
    if s.imag == 0:
        return cutoff_grid(j, s.real, ker).x_range[1]
    g0 = abs(gamma_factor(s, GammaFactorSpec(2)))
    x = 1.0
    while abs(cutoff_V_many(j, s, [x], ker)[0][0]) >= _DECAY * g0:
        x *= 1.25
    return x


@dataclass
class _Summands:
    """Per-term weights of both AFE sums, before the character is applied."""

    w1: np.ndarray = field(repr=False)
    w2: np.ndarray = field(repr=False)
    tail: float
    quad: float
    gamma: complex
    prefactor2: complex  # Q^(k/2 - s), without the root number


_SUMMAND_CACHE: "OrderedDict[tuple, _Summands]" = OrderedDict()
_SUMMAND_CACHE_SIZE = 64


def _tail_cut(env: np.ndarray, tol: float) -> tuple[int, float]:
    """Smallest M with sum_{m > M} env[m] <= tol; env[0] is unused."""
    rev = np.cumsum(env[::-1])[::-1]  # rev[m] = sum_{i >= m} env[i]
    rev = np.append(rev, 0.0)
    ok = np.nonzero(rev[1:] <= tol)[0]  # index i means tail after i is small
    M = int(ok[0]) if ok.size else env.size - 1
    return M, float(rev[M + 1])


def _divisors_upto(M: int) -> np.ndarray:
    return _divisor_cache(M)


_DIV_CACHE: dict[int, np.ndarray] = {}


def _divisor_cache(M: int) -> np.ndarray:
    for size, arr in _DIV_CACHE.items():
        if size >= M:
            return arr[: M + 1]
    arr = divisor_counts(max(M, 1024))
    _DIV_CACHE.clear()
    _DIV_CACHE[arr.size - 1] = arr
    return arr[: M + 1]


def afe_terms_needed(
    series_weight: int,
    conductor: int,
    s: complex,
    y: float | None = None,
    tol: float = 1e-10,
    ker: SmoothingKernel = DEFAULT_KERNEL,
) -> tuple[int, int]:
    """Dry run of the truncation rule: (M1, M2) without touching coefficients."""
    k = series_weight
    Q = conductor
    y = math.sqrt(Q) if y is None else float(y)
    s = complex(s)
    M1, M2, _, _, _, _ = _plan(k, Q, s, y, tol, ker)
    return M1, M2


def _plan(k, Q, s, y, tol, ker):
    g = gamma_factor(s, GammaFactorSpec(k))
    pref2 = complex(np.exp((k / 2 - s) * math.log(Q)))
    cap1 = int(_decay_limit(1, s, ker) * y) + 1
    cap2 = int(_decay_limit(2, k - s, ker) * Q / y) + 1
    d = _divisors_upto(max(cap1, cap2, 1))
    m1 = np.arange(cap1 + 1, dtype=float)
    m1[0] = 1.0
    v1, rel1 = _cutoff(1, s, m1 / y, ker)
    env1 = d[: cap1 + 1] * m1 ** ((k - 1) / 2 - s.real) * np.abs(v1) / abs(g)
    env1[0] = 0.0
    m2 = np.arange(cap2 + 1, dtype=float)
    m2[0] = 1.0
    v2, rel2 = _cutoff(2, k - s, m2 * y / Q, ker)
    env2 = abs(pref2) * d[: cap2 + 1] * m2 ** ((k - 1) / 2 - (k - s.real)) * np.abs(v2) / abs(g)
    env2[0] = 0.0
    M1, t1 = _tail_cut(env1, tol / 10)
    M2, t2 = _tail_cut(env2, tol / 10)
    # cutoff error, weighted by the same envelope
    quad = float(np.sum(env1[: M1 + 1] * rel1[: M1 + 1]) + np.sum(env2[: M2 + 1] * rel2[: M2 + 1]))
    return M1, M2, (v1[: M1 + 1], v2[: M2 + 1]), t1 + t2, quad, (g, pref2)


def _summands(series, Q, s, y, tol, ker) -> _Summands:
    # the cache holds only the coefficient-free part, so two series sharing
    # a spec (e.g. a rescaled copy) never alias each other
    k = series.weight
    key = (k, Q, complex(s), float(y), float(tol), ker)
    hit = _SUMMAND_CACHE.get(key)
    if hit is not None:
        _SUMMAND_CACHE.move_to_end(key)
    else:
        M1, M2, (v1, v2), tail, quad, (g, pref2) = _plan(k, Q, s, y, tol, ker)
        m1 = np.arange(M1 + 1, dtype=float)
        m1[0] = 1.0
        b1 = np.exp(((k - 1) / 2 - s) * np.log(m1)) * v1
        b1[0] = 0.0
        m2 = np.arange(M2 + 1, dtype=float)
        m2[0] = 1.0
        b2 = np.exp(((k - 1) / 2 - (k - s)) * np.log(m2)) * v2
        b2[0] = 0.0
        hit = _Summands(w1=b1, w2=b2, tail=tail, quad=quad, gamma=g, prefactor2=pref2)
        _SUMMAND_CACHE[key] = hit
        if len(_SUMMAND_CACHE) > _SUMMAND_CACHE_SIZE:
            _SUMMAND_CACHE.popitem(last=False)
    need = max(hit.w1.size, hit.w2.size) - 1
    if need > series.bound:
        raise InsufficientCoefficients(need, series.bound)
    a = series.normalized  # a(m) m^-(k-1)/2
    return replace(hit, w1=a[: hit.w1.size] * hit.w1, w2=a[: hit.w2.size] * hit.w2)


def clear_caches():
    _SUMMAND_CACHE.clear()
    _DIV_CACHE.clear()


def _char_weights(phi: CharacterTable | None, M: int, conj: bool = False) -> np.ndarray | None:
    if phi is None:
        return None
    vals = phi.values()
    if conj:
        vals = vals.conj()
    return vals[np.arange(M + 1) % phi.modulus]


def afe_value(
    series: CoefficientSeries,
    phi: CharacterTable | None,
    s: complex,
    y: float | None = None,
    tol: float = 1e-10,
    ker: SmoothingKernel = DEFAULT_KERNEL,
    sign: int | None = None,
    constant: complex | None = None,
) -> LValueResult:
    """L(s, f x phi) via the approximate functional equation.

    ``constant`` overrides the dual-sum constant C (used for sign controls).
    """
    k = series.weight
    s = complex(s)
    spec = fe_spec(series, phi, sign)
    Q = spec.conductor
    y = math.sqrt(Q) if y is None else float(y)
    if y <= 0:
        raise ValueError("cutoff parameter y must be positive")
    C = spec.constant if constant is None else complex(constant)
    sm = _summands(series, Q, s, y, tol, ker)
    c1 = _char_weights(phi, sm.w1.size - 1)
    c2 = _char_weights(phi, sm.w2.size - 1, conj=True)
    S1 = complex(np.sum(sm.w1 if c1 is None else sm.w1 * c1))
    S2 = complex(np.sum(sm.w2 if c2 is None else sm.w2 * c2))
    value = (S1 + C * sm.prefactor2 * S2) / sm.gamma
    roundoff = 8 * np.finfo(float).eps * float(np.abs(sm.w1).sum() + abs(sm.prefactor2) * np.abs(sm.w2).sum()) / abs(sm.gamma)
    tail = sm.tail + sm.quad + roundoff
    flags = []
    if tail > tol:
        flags.append("tail_exceeds_tol")
    notes = []
    if not (k / 2 - 1 < s.real < k / 2 + 1):
        notes.append("outside_strip")
    return LValueResult(
        s=s,
        value=complex(value),
        y=y,
        terms=(sm.w1.size - 1, sm.w2.size - 1),
        tail_estimate=float(tail),
        level=series.level,
        p=None if phi is None else phi.p,
        n=None if phi is None else phi.n,
        phi_exponent=None if phi is None else phi.e,
        flags=tuple(flags),
        notes=tuple(notes),
    )


def direct_value(
    series: CoefficientSeries,
    phi: CharacterTable | None,
    s: complex,
    terms: int,
    coprime_to: int | None = None,
) -> complex:
    """Partial Dirichlet sum sum_{m <= terms} a(m) phi(m) m^-s (oracle only).

    ``coprime_to`` drops the terms divisible by that integer (the principal
    character).
    """
    k = series.weight
    s = complex(s)
    if s.real <= k / 2 + 1:
        warnings.warn("Dirichlet series is not absolutely convergent here", RuntimeWarning, stacklevel=2)
    if terms > series.bound:
        raise InsufficientCoefficients(terms, series.bound)
    m = np.arange(1, terms + 1, dtype=float)
    w = series.floats[1: terms + 1] * np.exp(-s * np.log(m))
    if phi is not None:
        w = w * phi.values()[np.arange(1, terms + 1) % phi.modulus]
    if coprime_to is not None:
        w = np.where(np.arange(1, terms + 1) % coprime_to == 0, 0, w)
    # sum small terms first
    return complex(np.sum(w[::-1]))


def completed_lambda(
    series: CoefficientSeries,
    phi: CharacterTable | None,
    s: complex,
    y: float | None = None,
    tol: float = 1e-10,
    ker: SmoothingKernel = DEFAULT_KERNEL,
    sign: int | None = None,
    constant: complex | None = None,
) -> LValueResult:
    """Lambda(s) = Q^(s/2) Gamma(s, f) L(s, f x phi), returned in an LValueResult."""
    res = afe_value(series, phi, s, y=y, tol=tol, ker=ker, sign=sign, constant=constant)
    factor = lambda_factor(series, phi, s)
    return LValueResult(
        s=res.s,
        value=res.value * factor,
        y=res.y,
        terms=res.terms,
        tail_estimate=res.tail_estimate * abs(factor),
        level=res.level,
        p=res.p,
        n=res.n,
        phi_exponent=res.phi_exponent,
        flags=res.flags,
        notes=res.notes,
    )


def conductor_of(series: CoefficientSeries, phi: CharacterTable | None) -> int:
    return series.level if phi is None else series.level * phi.p ** (2 * phi.n)


def lambda_factor(series: CoefficientSeries, phi: CharacterTable | None, s: complex) -> complex:
    Q = conductor_of(series, phi)
    s = complex(s)
    return complex(np.exp(s / 2 * math.log(Q))) * gamma_factor(s, GammaFactorSpec(series.weight))


def fe_scale(series: CoefficientSeries, phi: CharacterTable | None, s: complex) -> float:
    """Q^(k/4) |Gamma(s, f) Gamma(k - s, f)|^(1/2), the natural size of Lambda."""
    k = series.weight
    Q = conductor_of(series, phi)
    spec = GammaFactorSpec(k)
    g = abs(gamma_factor(s, spec) * gamma_factor(k - complex(s), spec))
    return Q ** (k / 4) * math.sqrt(g)


def twisted_fe_residual(
    series: CoefficientSeries,
    phi: CharacterTable | None,
    s: complex,
    tol: float = 1e-10,
    ker: SmoothingKernel = DEFAULT_KERNEL,
    sign: int | None = None,
    flip: bool = False,
    y_factors: tuple[float, float] = (1.25, 1.6),
) -> float:
    """|Lambda(s, f x phi) - C Lambda(k - s, f x conj phi)| / fe_scale.

    The two sides use cutoff parameters whose product is not Q, so the
    comparison tests the constant C instead of reducing to an identity.
    With ``flip`` the constant is negated throughout (sign control).
    """
    k = series.weight
    spec = fe_spec(series, phi, sign)
    C = -spec.constant if flip else spec.constant
    Q = spec.conductor
    s = complex(s)
    y1, y2 = y_factors[0] * math.sqrt(Q), y_factors[1] * math.sqrt(Q)
    left = completed_lambda(series, phi, s, y=y1, tol=tol, ker=ker, sign=sign, constant=C).value
    dual = None if phi is None else phi.conj()
    if dual is None:
        C_dual = C
    else:
        C_dual = -fe_spec(series, dual, sign).constant if flip else None
    right = completed_lambda(series, dual, k - s, y=y2, tol=tol, ker=ker, sign=sign, constant=C_dual).value
    return abs(left - C * right) / fe_scale(series, phi, s)
