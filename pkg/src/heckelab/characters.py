"""Primitive Dirichlet characters of p-power order and conductor p^n.

A character is stored as an exponent e modulo p^(n-1): with g the least
primitive root mod p^n and L(a) = log_g(a) mod p^(n-1),

    phi(a) = zeta^(e L(a)),   zeta = exp(2 pi i / p^(n-1)).

All sums below are assembled in exact integer exponent arithmetic and only
turned into complex numbers through a table of p^n-th roots of unity at the
very end.  Primitivity is p not dividing e; evenness is automatic since -1
has order 2, prime to p.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class BaseFieldQ:
    """The rational field with all of its class-group and unit data trivial."""

    class_number: int = 1
    discriminant: int = 1
    different: int = 1
    ideal_reps: tuple = (1,)
    unit_reps: tuple = (1,)
    sign_reps: tuple = (1,)

    def __post_init__(self):
        trivial = dict(class_number=1, discriminant=1, different=1,
                       ideal_reps=(1,), unit_reps=(1,), sign_reps=(1,))
        for name, want in trivial.items():
            if getattr(self, name) != want:
                raise ValueError(f"only the rational base field is supported ({name}={want})")


QQ = BaseFieldQ()


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return False
        f += 2
    return True


@dataclass(frozen=True)
class PrimeSetting:
    p: int
    n0: int = 1

    def __post_init__(self):
        if self.p == 2 or not is_prime(self.p):
            raise ValueError(f"p must be an odd prime, got {self.p}")
        if self.n0 < 1:
            raise ValueError(f"n0 must be a positive integer, got {self.n0}")


@lru_cache(maxsize=None)
def primitive_root(p: int, n: int) -> int:
    """Least generator of (Z/p^n)^x for an odd prime p."""
    q = p ** n
    order = (p - 1) * p ** (n - 1)
    factors = {p} | {f for f in range(2, p) if (p - 1) % f == 0 and is_prime(f)}
    for g in range(2, q):
        if g % p == 0:
            continue
        if all(pow(g, order // f, q) != 1 for f in factors):
            return g
    raise ArithmeticError("no primitive root found")  # unreachable for odd p


@lru_cache(maxsize=64)
def dlog_table(p: int, n: int) -> np.ndarray:
    """L(a) = log_g(a) mod p^(n-1) for a = 0..p^n-1, with -1 at non-units."""
    q = p ** n
    m = p ** (n - 1) if n >= 1 else 1
    g = primitive_root(p, n)
    table = np.full(q, -1, dtype=np.int64)
    x = 1
    for k in range((p - 1) * p ** (n - 1)):
        table[x] = k % m
        x = x * g % q
    table.setflags(write=False)
    return table


@lru_cache(maxsize=64)
def unit_roots(q: int) -> np.ndarray:
    """exp(2 pi i k / q) for k = 0..q-1."""
    k = np.arange(q)
    return np.exp(2j * np.pi * k / q)


def additive_char(x: int, q: int) -> complex:
    """e(x / q)."""
    return complex(unit_roots(q)[x % q])


@dataclass(frozen=True)
class CharacterTable:
    """phi mod p^n of order p^(n-1): phi(g) = exp(2 pi i e / p^(n-1))."""

    p: int
    n: int
    e: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("primitive p-power-order characters need n >= 2")
        if self.e % self.p == 0:
            raise ValueError(f"exponent {self.e} is not primitive (divisible by {self.p})")
        object.__setattr__(self, "e", self.e % self.order)

    @property
    def modulus(self) -> int:
        return self.p ** self.n

    @property
    def order(self) -> int:
        return self.p ** (self.n - 1)

    @property
    def generator(self) -> int:
        return primitive_root(self.p, self.n)

    def conj(self) -> "CharacterTable":
        return CharacterTable(self.p, self.n, -self.e)

    def power(self, t: int) -> "CharacterTable":
        return CharacterTable(self.p, self.n, self.e * t)

    def exponent(self, a: int) -> int | None:
        """k with phi(a) = zeta^k, or None when p | a."""
        L = int(dlog_table(self.p, self.n)[a % self.modulus])
        return None if L < 0 else self.e * L % self.order

    def exponents(self) -> np.ndarray:
        """Exponents over all residues mod p^n (-1 at non-units)."""
        L = dlog_table(self.p, self.n)
        return np.where(L >= 0, (self.e * L) % self.order, -1)

    def values(self) -> np.ndarray:
        """phi(a) for a = 0..p^n-1 as complex numbers (exactly 0 at non-units)."""
        ex = self.exponents()
        out = np.zeros(self.modulus, dtype=complex)
        units = ex >= 0
        out[units] = unit_roots(self.order)[ex[units]]
        return out

    def __call__(self, a: int) -> complex:
        return evaluate(self, a)[0]


def enumerate_characters(setting: PrimeSetting | int, n: int) -> list[CharacterTable]:
    """All primitive characters of p-power order with conductor p^n."""
    p = setting.p if isinstance(setting, PrimeSetting) else int(setting)
    if n <= 0:
        raise ValueError(f"n must be positive, got {n}")
    if n == 1:
        return []
    return [CharacterTable(p, n, e) for e in range(1, p ** (n - 1)) if e % p]


def evaluate(phi: CharacterTable, a: int) -> tuple[complex, int | None]:
    """(phi(a), exponent); (0, None) when p | a."""
    k = phi.exponent(a)
    if k is None:
        return 0j, None
    return complex(unit_roots(phi.order)[k]), k


def _unit_residues(p: int, n: int) -> np.ndarray:
    a = np.arange(p ** n)
    return a[a % p != 0]


def _twisted_exponents(phi: CharacterTable, a: np.ndarray, scale: int = 1) -> np.ndarray:
    """Exponents mod p^n of phi(a) e(scale * a / p^n) for unit residues a."""
    L = dlog_table(phi.p, phi.n)[a]
    return (phi.p * phi.e * L + scale * a) % phi.modulus


def _root_sum(k: np.ndarray, q: int) -> complex:
    counts = np.bincount(k, minlength=q)
    return complex(counts @ unit_roots(q))


@lru_cache(maxsize=8192)
def gauss_sum(phi: CharacterTable) -> complex:
    """G(phi) = sum over a mod p^n of phi(a) e(a / p^n)."""
    a = _unit_residues(phi.p, phi.n)
    return _root_sum(_twisted_exponents(phi, a), phi.modulus)


@dataclass(frozen=True)
class AdditiveParameter:
    c: int
    p: int
    n0: int

    @property
    def modulus(self) -> int:
        return self.p ** self.n0


def _check_depth(phi: CharacterTable, n0: int):
    if n0 < 1:
        raise ValueError("n0 must be positive")
    if phi.n <= n0:
        raise ValueError(f"conductor exponent n={phi.n} must exceed n0={n0}")


@lru_cache(maxsize=8192)
def additive_parameter(phi: CharacterTable, n0: int) -> AdditiveParameter:
    """The unit c with phi(1 + p^(n-n0) b) = e(b c / p^n0) for every b.

    b -> phi(1 + p^(n-n0) b) is a homomorphism on Z/p^n0 only when
    2(n - n0) >= n; below that no such c exists and ValueError is raised.
    """
    _check_depth(phi, n0)
    p, n = phi.p, phi.n
    if 2 * (n - n0) < n:
        raise ValueError(
            f"no additive parameter: b -> phi(1 + p^{n - n0} b) is not additive mod p^{n0} "
            f"when n={n} < 2*n0={2 * n0}"
        )
    step = p ** (n - 1 - n0)
    k1 = phi.exponent(1 + p ** (n - n0))
    if k1 % step:
        raise ArithmeticError("character exponent on 1 + p^(n-n0) Z is not a multiple of p^(n-1-n0)")
    c = (k1 // step) % p ** n0
    # replay the defining relation exhaustively in exponent form
    q0 = p ** n0
    for b in range(q0):
        if phi.exponent(1 + p ** (n - n0) * b) != (b * c % q0) * step:
            raise ArithmeticError(f"additive relation fails at b={b}")
    if c % p == 0:
        raise ArithmeticError("additive parameter is not a unit; character not primitive")
    return AdditiveParameter(c=int(c), p=p, n0=n0)


@lru_cache(maxsize=8192)
def partial_gauss_sum(phi: CharacterTable, n0: int, residue: int | None = None) -> complex:
    """Sum of phi(a) e(a / p^n) over units a congruent to `residue` mod p^n0.

    The residue defaults to phi's own additive parameter.  Inside the
    Galois averages the sum for conj(phi^s) is taken over the class of c_phi
    (see g_average); pass it explicitly there.
    """
    _check_depth(phi, n0)
    p, n = phi.p, phi.n
    if residue is None:
        residue = additive_parameter(phi, n0).c
    q0 = p ** n0
    a = np.arange(residue % q0, p ** n, q0)
    a = a[a % p != 0]
    return _root_sum(_twisted_exponents(phi, a), phi.modulus)


def galois_orbit(phi: CharacterTable, n0: int) -> list[CharacterTable]:
    """{phi^t : t = 1 mod p^n0, t mod p^(n-1)}."""
    _check_depth(phi, n0)
    p, n = phi.p, phi.n
    if n0 >= n - 1:
        return [phi]
    return [phi.power(1 + p ** n0 * j) for j in range(p ** (n - 1 - n0))]


def orbit_multipliers(phi: CharacterTable, n0: int) -> np.ndarray:
    p, n = phi.p, phi.n
    if n0 >= n - 1:
        return np.array([1], dtype=np.int64)
    return 1 + p ** n0 * np.arange(p ** (n - 1 - n0), dtype=np.int64)


def phi_average(phi: CharacterTable, a: int, n0: int) -> complex:
    """Mean of phi^s(a) over the Galois orbit."""
    _check_depth(phi, n0)
    L = phi.exponent(a)
    if L is None:
        return 0j
    t = orbit_multipliers(phi, n0)
    return _root_sum((L * t) % phi.order, phi.order) / t.size


def phi_average_table(phi: CharacterTable, n0: int) -> np.ndarray:
    """phi_av(a) for every residue a mod p^n."""
    _check_depth(phi, n0)
    ex = phi.exponents()
    t = orbit_multipliers(phi, n0)
    out = np.zeros(phi.modulus, dtype=complex)
    units = ex >= 0
    roots = unit_roots(phi.order)
    out[units] = roots[np.multiply.outer(ex[units], t) % phi.order].mean(axis=1)
    return out


def support_predicate(p: int, n: int, n0: int, a: int) -> bool:
    """a^(p-1) = 1 mod p^(n-n0): where the orbit average can be non-zero."""
    return a % p != 0 and pow(a, p - 1, p ** (n - n0)) == 1 % p ** (n - n0)


def root_number(phi: CharacterTable, level: int) -> complex:
    """W(phi) = phi(N) G(phi)^2 / p^n, the twisted root number over Q.

    Together with the untwisted sign eps, Lambda(s, f x phi) equals
    eps W(phi) (N p^2n)^(k/2 - s) Lambda(k - s, f x conj(phi)).
    """
    if math.gcd(level, phi.p) != 1:
        raise ValueError(f"level {level} is not coprime to p={phi.p}")
    G = gauss_sum(phi)
    return evaluate(phi, level)[0] * G * G / phi.modulus


@lru_cache(maxsize=1024)
def _orbit_kernel(phi: CharacterTable, n0: int, level: int | None):
    """Per-orbit-member weights G1(conj phi^s) G(phi^s) [W(phi^s)] / (|G| p^n)."""
    c = additive_parameter(phi, n0).c
    orbit = galois_orbit(phi, n0)
    w = []
    for chi in orbit:
        val = partial_gauss_sum(chi.conj(), n0, residue=c) * gauss_sum(chi)
        if level is not None:
            val *= root_number(chi, level)
        w.append(val)
    return np.array(w) / (len(orbit) * phi.modulus)


def g_average(phi: CharacterTable, a: int, n0: int) -> complex:
    """(1 / |G| p^n) sum_s G1(conj phi^s) G(phi^s) phi^s(a)."""
    _check_depth(phi, n0)
    if a % phi.p == 0:
        return 0j
    weights = _orbit_kernel(phi, n0, None)
    vals = np.array([evaluate(chi, a)[0] for chi in galois_orbit(phi, n0)])
    return complex(weights @ vals)


def g_average_iota(phi: CharacterTable, a: int, n0: int, level: int) -> complex:
    """(1 / |G| p^n) sum_s G1(conj phi^s) G(phi^s) W(phi^s) conj(phi^s)(a)."""
    _check_depth(phi, n0)
    if math.gcd(level, phi.p) != 1:
        raise ValueError(f"level {level} is not coprime to p={phi.p}")
    if a % phi.p == 0:
        return 0j
    weights = _orbit_kernel(phi, n0, level)
    vals = np.array([evaluate(chi.conj(), a)[0] for chi in galois_orbit(phi, n0)])
    return complex(weights @ vals)


def _average_table(phi: CharacterTable, n0: int, level: int | None) -> np.ndarray:
    weights = _orbit_kernel(phi, n0, level)
    t = orbit_multipliers(phi, n0)
    if level is not None:
        t = -t
    ex = dlog_table(phi.p, phi.n)
    units = ex >= 0
    out = np.zeros(phi.modulus, dtype=complex)
    k = np.multiply.outer((phi.e * ex[units]) % phi.order, t) % phi.order
    out[units] = unit_roots(phi.order)[k] @ weights
    return out


def g_average_table(phi: CharacterTable, n0: int) -> np.ndarray:
    """g_average(phi, a, n0) for every residue a mod p^n."""
    _check_depth(phi, n0)
    return _average_table(phi, n0, None)


def g_average_iota_table(phi: CharacterTable, n0: int, level: int) -> np.ndarray:
    """g_average_iota(phi, a, n0, level) for every residue a mod p^n."""
    _check_depth(phi, n0)
    if math.gcd(level, phi.p) != 1:
        raise ValueError(f"level {level} is not coprime to p={phi.p}")
    return _average_table(phi, n0, level)


def kloosterman_partial(c: int, d: int, setting: PrimeSetting | int, n: int, n0: int) -> complex:
    """(1/p^n) sum over units a = c mod p^n0 of e((a + d / a) / p^n)."""
    p = setting.p if isinstance(setting, PrimeSetting) else int(setting)
    if -(-n // 2) < n0:
        raise ValueError(f"need ceil(n/2) >= n0, got n={n}, n0={n0}")
    if c % p == 0 or d % p == 0:
        raise ValueError("c and d must be units mod p")
    q = p ** n
    q0 = p ** n0
    a = np.arange(c % q0, q, q0)
    a = a[a % p != 0]
    inv = np.array([pow(int(x), -1, q) for x in a], dtype=np.int64)
    k = (a + (d % q) * inv) % q
    return _root_sum(k, q) / q


def teichmuller_set(p: int, n: int) -> list[int]:
    """The p-1 residues mod p^n with kappa^(p-1) = 1, ordered by reduction mod p."""
    q = p ** n
    return [pow(a, p ** (n - 1), q) for a in range(1, p)]


@dataclass(frozen=True)
class TeichmullerSet:
    p: int
    n: int

    @property
    def elements(self) -> list[int]:
        return teichmuller_set(self.p, self.n)


@dataclass(frozen=True)
class ConeCount:
    residue: int
    modulus: int
    x: float
    count: int
    bound: int
    violated: bool


def cone_bound_check(a: int, p: int, n: int, n0: int, x: float) -> ConeCount:
    """Count positive m <= x with m = a mod p^(n-n0) against ceil(x / p^(n-n0))."""
    q = p ** (n - n0)
    r = a % q
    first = r if r > 0 else q
    count = 0 if x < first else int((math.floor(x) - first) // q) + 1
    bound = max(math.ceil(x / q), 1) if x >= 1 else 0
    return ConeCount(residue=r, modulus=q, x=x, count=count, bound=bound, violated=count > bound)
