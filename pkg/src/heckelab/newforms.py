"""Exact Fourier coefficients of a few small newforms over Q.

Providers
---------
* ``delta``: Ramanujan's Delta (weight 12, level 1), from (E4^3 - E6^2)/1728
  with big-integer Kronecker substitution.
* elliptic curves of small conductor, from point counts mod q and the Hecke
  relations.

Coefficients are kept as Python ints; float views are produced on demand.
"""
from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Sequence

import gmpy2
import numba
import numpy as np
from gmpy2 import mpz

from .characters import CharacterTable

MAX_BOUND = 10 ** 6
CACHE_MAGIC = "heckelab-coeffs"
CACHE_VERSION = "v1"


class SeriesBoundError(ValueError):
    """Requested more coefficients than the configured maximum."""


class SingularReductionError(ArithmeticError):
    """Curve is singular mod a prime that was claimed to be good."""


@dataclass(frozen=True)
class NewformSpec:
    label: str
    weight: int
    level: int
    sign: int | None = None  # sign of the functional equation, when known
    ainvs: tuple[int, ...] | None = None
    nebentype: str = "trivial"

    def __post_init__(self):
        if self.weight < 2 or self.weight % 2:
            raise ValueError(f"weight must be even and >= 2, got {self.weight}")
        if self.level < 1:
            raise ValueError(f"level must be positive, got {self.level}")
        if self.sign not in (None, 1, -1):
            raise ValueError("sign must be +1, -1 or unknown")
        if self.nebentype != "trivial":
            raise ValueError("only trivial nebentype is supported")


@dataclass(frozen=True, eq=False)
class CoefficientSeries:
    """a_f(1..B) as exact integers; ``coeffs[0]`` is a_f(1)."""

    spec: NewformSpec
    coeffs: tuple[int, ...] = field(repr=False)

    def __post_init__(self):
        if not self.coeffs or self.coeffs[0] != 1:
            raise ValueError("series must be normalized with a(1) = 1")

    @property
    def bound(self) -> int:
        return len(self.coeffs)

    @property
    def weight(self) -> int:
        return self.spec.weight

    @property
    def level(self) -> int:
        return self.spec.level

    @property
    def label(self) -> str:
        return self.spec.label

    def __getitem__(self, n: int) -> int:
        if not 1 <= n <= self.bound:
            raise IndexError(f"a({n}) outside 1..{self.bound}")
        return self.coeffs[n - 1]

    def __len__(self) -> int:
        return self.bound

    def truncate(self, B: int) -> "CoefficientSeries":
        if B > self.bound:
            raise SeriesBoundError(f"series has only {self.bound} coefficients, {B} requested")
        return CoefficientSeries(self.spec, self.coeffs[:B])

    @cached_property
    def floats(self) -> np.ndarray:
        """Float array a with a[n] = a_f(n) and a[0] = 0."""
        out = np.empty(self.bound + 1, dtype=float)
        out[0] = 0.0
        out[1:] = np.array([float(c) for c in self.coeffs])
        out.setflags(write=False)
        return out

    @cached_property
    def normalized(self) -> np.ndarray:
        """a_f(n) / n^((k-1)/2), index 0 unused."""
        n = np.arange(self.bound + 1, dtype=float)
        n[0] = 1.0
        out = self.floats * n ** (-(self.weight - 1) / 2)
        out[0] = 0.0
        out.setflags(write=False)
        return out


# ---------------------------------------------------------------- Kronecker
# Signed power series are packed into one big integer, W bits per slot, with
# a per-slot bias so the digits stay non-negative during byte conversion.

_SLOT_BITS = 320
_SLOT_BYTES = _SLOT_BITS // 8
_BIAS = 1 << (_SLOT_BITS - 1)


@lru_cache(maxsize=8)
def _bias_word(length: int) -> mpz:
    return mpz(int.from_bytes(_BIAS.to_bytes(_SLOT_BYTES, "little") * length, "little"))


def _pack(coeffs: Sequence[int]) -> mpz:
    raw = b"".join((int(c) + _BIAS).to_bytes(_SLOT_BYTES, "little") for c in coeffs)
    return mpz(int.from_bytes(raw, "little")) - _bias_word(len(coeffs))


def _unpack(x: mpz, length: int) -> list[int]:
    y = (x + _bias_word(length)) & ((mpz(1) << (_SLOT_BITS * length)) - 1)
    raw = int(y).to_bytes(_SLOT_BYTES * length, "little")
    return [
        int.from_bytes(raw[i * _SLOT_BYTES:(i + 1) * _SLOT_BYTES], "little") - _BIAS
        for i in range(length)
    ]


def _series_mul(a: mpz, b: mpz, length: int) -> mpz:
    """Product of two packed series truncated to `length` slots."""
    return _pack(_unpack(a * b, length))


def _divisor_power_sums(B: int, k: int) -> np.ndarray:
    """sigma_k(n) for n = 0..B-1 as Python ints (object array)."""
    out = np.zeros(B, dtype=object)
    for d in range(1, B):
        out[d::d] += d ** k
    return out


def _check_bound(B: int):
    if B < 1:
        raise ValueError(f"coefficient bound must be positive, got {B}")
    if B > MAX_BOUND:
        raise SeriesBoundError(f"bound {B} exceeds the configured maximum {MAX_BOUND}")


DELTA_SPEC = NewformSpec("delta", 12, 1, sign=1)


def delta_series(B: int) -> CoefficientSeries:
    """tau(1..B) from Delta = (E4^3 - E6^2) / 1728."""
    _check_bound(B)
    L = B + 1
    e4 = 240 * _divisor_power_sums(L, 3)
    e6 = -504 * _divisor_power_sums(L, 5)
    e4[0] = 1
    e6[0] = 1
    x4 = _pack(e4)
    x6 = _pack(e6)
    e4sq = _series_mul(x4, x4, L)
    cube = _unpack(e4sq * x4, L)
    square = _unpack(x6 * x6, L)
    tau = []
    for n in range(1, L):
        q, r = divmod(cube[n] - square[n], 1728)
        if r:
            raise ArithmeticError(f"E4^3 - E6^2 not divisible by 1728 at q^{n}")
        tau.append(q)
    return CoefficientSeries(DELTA_SPEC, tuple(tau))


def delta_eta_product(B: int) -> list[int]:
    """tau(1..B) from q prod (1 - q^n)^24, via Euler's pentagonal series."""
    _check_bound(B)
    L = B
    euler = [0] * L
    euler[0] = 1
    k = 1
    while k * (3 * k - 1) // 2 < L:
        for e in (k * (3 * k - 1) // 2, k * (3 * k + 1) // 2):
            if e < L:
                euler[e] = -1 if k % 2 else 1
        k += 1
    x = _pack(euler)
    x2 = _series_mul(x, x, L)
    x4 = _series_mul(x2, x2, L)
    x8 = _series_mul(x4, x4, L)
    x16 = _series_mul(x8, x8, L)
    return _unpack(x16 * x8, L)


# ---------------------------------------------------------------- elliptic


def _spf_sieve(B: int) -> np.ndarray:
    spf = np.zeros(B + 1, dtype=np.int64)
    for q in range(2, int(math.isqrt(B)) + 1):
        if spf[q] == 0:
            block = spf[q * q::q]
            block[block == 0] = q
            spf[q * q::q] = block
    idx = np.nonzero(spf == 0)[0]
    spf[idx] = idx
    return spf


def _primes_upto(B: int) -> list[int]:
    if B < 2:
        return []
    spf = _spf_sieve(B)
    return [int(q) for q in np.nonzero(spf[2:] == np.arange(2, B + 1))[0] + 2]


def _b_invariants(a: Sequence[int]):
    a1, a2, a3, a4, a6 = a
    b2 = a1 * a1 + 4 * a2
    b4 = 2 * a4 + a1 * a3
    b6 = a3 * a3 + 4 * a6
    b8 = a1 * a1 * a6 + 4 * a2 * a6 - a1 * a3 * a4 + a2 * a3 * a3 - a4 * a4
    return b2, b4, b6, b8


def discriminant(a: Sequence[int]) -> int:
    b2, b4, b6, b8 = _b_invariants(a)
    return -b2 * b2 * b8 - 8 * b4 ** 3 - 27 * b6 * b6 + 9 * b2 * b4 * b6


def count_points(a: Sequence[int], q: int) -> int:
    """#E(F_q) including the point at infinity (and any singular point)."""
    a1, a2, a3, a4, a6 = (int(c) % q for c in a)
    if q == 2:
        total = 1
        for x in range(2):
            for y in range(2):
                if (y * y + a1 * x * y + a3 * y - x ** 3 - a2 * x * x - a4 * x - a6) % 2 == 0:
                    total += 1
        return total
    # (2y + a1 x + a3)^2 = 4x^3 + b2 x^2 + 2 b4 x + b6
    b2, b4, b6, _ = (c % q for c in _b_invariants(a))
    x = np.arange(q, dtype=np.int64)
    rhs = (((4 * x + b2) % q * x + 2 * b4) % q * x + b6) % q
    chi = np.full(q, -1, dtype=np.int64)
    chi[(x * x) % q] = 1
    chi[0] = 0
    return int(q + 1 + chi[rhs].sum())


def elliptic_ap(ainvs: Sequence[int], q: int) -> int:
    return q + 1 - count_points(ainvs, q)


@numba.njit(cache=False)
def _traces_odd(b2: int, b4: int, b6: int, primes: np.ndarray) -> np.ndarray:
    """a_q = -sum_x chi(4x^3 + b2 x^2 + 2 b4 x + b6) for each odd prime q.

    The cubic is stepped by finite differences so the inner loop has no
    divisions.
    """
    out = np.zeros(primes.size, dtype=np.int64)
    for i in range(primes.size):
        q = primes[i]
        chi = np.full(q, -1, dtype=np.int8)
        sq, step = 0, 1
        for x in range((q + 1) // 2):
            chi[sq] = 1
            sq += step
            if sq >= q:
                sq -= q
            step += 2
            if step >= q:
                step -= q
        chi[0] = 0
        c2, c4, c6 = b2 % q, 2 * b4 % q, b6 % q
        r = c6
        d1 = (4 + c2 + c4) % q
        d2 = (24 + 2 * c2) % q
        d3 = 24 % q
        total = 0
        for x in range(q):
            total += chi[r]
            r += d1 - q
            r += q & (r >> 63)
            d1 += d2 - q
            d1 += q & (d1 >> 63)
            d2 += d3 - q
            d2 += q & (d2 >> 63)
        out[i] = -total
    return out


def elliptic_traces(ainvs: Sequence[int], primes: Sequence[int]) -> dict[int, int]:
    """a_q for many primes at once (compiled loop; q = 2 by brute force)."""
    b2, b4, b6, _ = _b_invariants(ainvs)
    odd = np.array([q for q in primes if q != 2], dtype=np.int64)
    res = dict(zip(odd.tolist(), _traces_odd(b2, b4, b6, odd).tolist())) if odd.size else {}
    if 2 in primes:
        res[2] = elliptic_ap(ainvs, 2)
    return res


def elliptic_series(
    ainvs: Sequence[int], N: int, B: int, label: str | None = None, sign: int | None = None
) -> CoefficientSeries:
    """Coefficients of the weight-2 newform attached to the curve of conductor N."""
    _check_bound(B)
    ainvs = tuple(int(c) for c in ainvs)
    disc = discriminant(ainvs)
    if disc == 0:
        raise SingularReductionError("curve is singular over Q")
    spec = NewformSpec(label or f"ec{N}", 2, N, sign=sign, ainvs=ainvs)
    a = [0] * (B + 1)
    a[1] = 1
    primes = _primes_upto(B)
    traces = elliptic_traces(ainvs, primes)
    for q in primes:
        if N % q and disc % q == 0:
            raise SingularReductionError(f"singular reduction at q={q}, which does not divide N={N}")
        ap = traces[q]
        a[q] = ap
        prev, cur = 1, ap
        qr = q
        while qr * q <= B:
            qr *= q
            if N % q == 0:
                nxt = cur * ap
            else:
                nxt = ap * cur - q * prev
            a[qr] = nxt
            prev, cur = cur, nxt
    _fill_multiplicative(a, B)
    return CoefficientSeries(spec, tuple(a[1:]))


def _fill_multiplicative(a: list[int], B: int):
    spf = _spf_sieve(B)
    for n in range(2, B + 1):
        q = int(spf[n])
        m = n
        qr = 1
        while m % q == 0:
            m //= q
            qr *= q
        if m > 1:
            a[n] = a[qr] * a[m]


# ---------------------------------------------------------------- twisting


@dataclass(frozen=True)
class TwistedCoefficients:
    """n -> a_f(n) phi(n), evaluated lazily."""

    series: CoefficientSeries
    phi: CharacterTable

    def __getitem__(self, n: int) -> complex:
        return self.series[n] * self.phi(n)

    def array(self, M: int) -> np.ndarray:
        """Complex array with entry n equal to a_f(n) phi(n) for n <= M."""
        vals = self.phi.values()
        n = np.arange(M + 1)
        return self.series.floats[: M + 1] * vals[n % self.phi.modulus]


def twist_coefficients(series: CoefficientSeries, phi: CharacterTable) -> TwistedCoefficients:
    return TwistedCoefficients(series, phi)


# ---------------------------------------------------------------- registry


@dataclass(frozen=True)
class Provider:
    spec: NewformSpec
    aliases: tuple[str, ...] = ()

    def compute(self, B: int) -> CoefficientSeries:
        if self.spec.label == "delta":
            return delta_series(B)
        return elliptic_series(self.spec.ainvs, self.spec.level, B, self.spec.label, self.spec.sign)


REGISTRY: dict[str, Provider] = {}


def register(provider: Provider):
    for name in (provider.spec.label, *provider.aliases):
        REGISTRY[name.lower()] = provider


register(Provider(DELTA_SPEC, aliases=("Delta", "tau", "1a")))
register(Provider(NewformSpec("11a", 2, 11, 1, (0, -1, 1, -10, -20)), ("11a1",)))
register(Provider(NewformSpec("14a", 2, 14, 1, (1, 0, 1, 4, -6)), ("14a1",)))
register(Provider(NewformSpec("15a", 2, 15, 1, (1, 1, 1, -10, -10)), ("15a1",)))
register(Provider(NewformSpec("17a", 2, 17, 1, (1, -1, 1, -1, -14)), ("17a1",)))
register(Provider(NewformSpec("37a", 2, 37, -1, (0, 0, 1, -1, 0)), ("37a1",)))


class UnknownFormError(KeyError):
    pass


def resolve(label: str) -> Provider:
    try:
        return REGISTRY[label.lower()]
    except KeyError:
        raise UnknownFormError(label) from None


def known_labels() -> list[str]:
    return sorted({p.spec.label for p in REGISTRY.values()})


# ---------------------------------------------------------------- disk cache


def default_cache_dir() -> Path:
    env = os.environ.get("HECKELAB_CACHE")
    if env:
        return Path(env)
    return Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "heckelab"


def cache_path(cache_dir: Path | str, label: str, B: int) -> Path:
    return Path(cache_dir) / f"{label}-{B}.coeffs"


def write_cache(series: CoefficientSeries, cache_dir: Path | str) -> Path:
    """Write atomically: temp file in the same directory, then os.replace."""
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    s = series.spec
    header = f"{CACHE_MAGIC} {CACHE_VERSION} {s.label} {s.weight} {s.level} {series.bound}"
    body = "\n".join([header, *map(str, series.coeffs)]) + "\n"
    target = cache_path(cache_dir, s.label, series.bound)
    fd, tmp = tempfile.mkstemp(dir=cache_dir, prefix=".tmp-", suffix=".coeffs")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(body)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return target


class CacheFormatError(ValueError):
    pass


def read_cache(path: Path | str, spec: NewformSpec | None = None) -> CoefficientSeries:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 6 or header[0] != CACHE_MAGIC or header[1] != CACHE_VERSION:
            raise CacheFormatError(f"{path}: bad header")
        label, k, N, B = header[2], int(header[3]), int(header[4]), int(header[5])
        coeffs = tuple(int(line) for line in fh)
    if len(coeffs) != B:
        raise CacheFormatError(f"{path}: expected {B} coefficients, found {len(coeffs)}")
    if spec is None:
        spec = resolve(label).spec
    if (spec.label, spec.weight, spec.level) != (label, k, N):
        raise CacheFormatError(f"{path}: header does not match {spec.label}")
    return CoefficientSeries(spec, coeffs)


def cached_files(cache_dir: Path | str) -> list[tuple[Path, str, int]]:
    """(path, label, bound) for every cache file in the directory."""
    out = []
    d = Path(cache_dir)
    if not d.is_dir():
        return out
    for path in sorted(d.glob("*.coeffs")):
        if path.name.startswith("."):
            continue
        try:
            with open(path) as fh:
                h = fh.readline().split()
            if len(h) == 6 and h[0] == CACHE_MAGIC:
                out.append((path, h[2], int(h[5])))
        except (OSError, ValueError):
            continue
    return out


_MEMO: dict[str, CoefficientSeries] = {}


def get_series(label: str, B: int, cache_dir: Path | str | None = None) -> CoefficientSeries:
    """Series for a registered label with at least B coefficients.

    Reuses the largest series already held in memory, then any disk cache
    entry with a large enough bound; computes and stores otherwise.
    """
    _check_bound(B)
    prov = resolve(label)
    name = prov.spec.label
    held = _MEMO.get(name)
    if held is not None and held.bound >= B:
        return held.truncate(B)
    series = None
    if cache_dir is not None:
        best = [(b, p) for p, lab, b in cached_files(cache_dir) if lab == name and b >= B]
        if best:
            series = read_cache(min(best)[1], prov.spec)
    if series is None:
        series = prov.compute(B)
        if cache_dir is not None:
            write_cache(series, cache_dir)
    _MEMO[name] = series
    return series.truncate(B)


def clear_memo():
    _MEMO.clear()


# ---------------------------------------------------------------- checks


def divisor_count(n: int) -> int:
    count = 0
    d = 1
    while d * d <= n:
        if n % d == 0:
            count += 1 if d * d == n else 2
        d += 1
    return count


def divisor_counts(B: int) -> np.ndarray:
    d = np.zeros(B + 1, dtype=np.int64)
    for k in range(1, B + 1):
        d[k::k] += 1
    return d


def fricke_sign(series: CoefficientSeries, s0: complex | None = None, tol: float = 1e-10) -> int:
    """Sign eps of Lambda(s) = eps Lambda(k - s), decided by residuals.

    For each candidate sign the AFE is run at s0 and k - s0 with cutoff
    parameters whose product is not N.  Only the true sign makes the AFE
    independent of y, so only it gives a small residual.
    """
    from .lfunctions import completed_lambda, fe_scale

    k = series.weight
    if s0 is None:
        s0 = complex(k / 2 + 0.3, 0.7)
    N = series.level
    y1, y2 = 1.25 * math.sqrt(N), 1.6 * math.sqrt(N)
    scale = fe_scale(series, None, s0)
    res = {}
    for eps in (1, -1):
        left = completed_lambda(series, None, s0, y=y1, tol=tol, sign=eps).value
        right = completed_lambda(series, None, k - s0, y=y2, tol=tol, sign=eps).value
        res[eps] = abs(left - eps * right) / scale
    win = min(res, key=res.get)
    if res[win] >= 1e-6 or res[-win] <= 1e-2:
        raise ArithmeticError(f"ambiguous functional-equation sign: residuals {res}")
    return win
