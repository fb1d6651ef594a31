"""Exhaustive and sampled checks of the character-average identities and bounds."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import numpy as np

from . import characters as ch


@dataclass
class CheckResult:
    check: str
    p: int
    n: int
    n0: int
    cases: int = 0
    violations: int = 0
    max_deviation: float = 0.0
    worst: dict = field(default_factory=dict)
    skipped: str | None = None
    level: int | None = None

    def record(self, deviation: float, violated: bool, case: dict):
        self.cases += 1
        if violated:
            self.violations += 1
        if deviation > self.max_deviation or not self.worst:
            self.max_deviation = max(self.max_deviation, deviation)
            self.worst = case


def average_identity(p, n, n0, a_values=range(1, 21), tol=1e-10,
                     phi_average_table=ch.phi_average_table) -> CheckResult:
    """|G_av(phi, a) - phi_av(a)| <= tol for every primitive phi mod p^n."""
    res = CheckResult("average_identity", p, n, n0)
    if n <= n0 or 2 * (n - n0) < n:
        res.skipped = "additive parameter undefined (needs n >= 2 n0 and n > n0)"
        return res
    a_values = [a for a in a_values if a % p]
    for phi in ch.enumerate_characters(p, n):
        gav = ch.g_average_table(phi, n0)
        pav = phi_average_table(phi, n0)
        for a in a_values:
            d = abs(gav[a % phi.modulus] - pav[a % phi.modulus])
            res.record(d, d > tol, {"phi_exponent": phi.e, "a": a})
    return res


def support_criterion(p, n, n0, a_values=range(1, 21), tol=1e-10) -> CheckResult:
    """phi_av(a) != 0 exactly when a^(p-1) = 1 mod p^(n-n0); then it equals phi(a)."""
    res = CheckResult("support_criterion", p, n, n0)
    if n <= n0:
        res.skipped = "needs n > n0"
        return res
    a_values = [a for a in a_values if a % p]
    for phi in ch.enumerate_characters(p, n):
        pav = ch.phi_average_table(phi, n0)
        vals = phi.values()
        for a in a_values:
            v = pav[a % phi.modulus]
            if ch.support_predicate(p, n, n0, a):
                d = abs(v - vals[a % phi.modulus])
            else:
                d = abs(v)
            res.record(d, d > tol, {"phi_exponent": phi.e, "a": a})
    return res


def kloosterman_bound(p, n, n0=1, sample: int | None = None, seed: int = 0) -> CheckResult:
    """|kloosterman_partial(c, d)| <= p^(2 - n/2); deviation is |K| p^(n/2 - 2)."""
    res = CheckResult("kloosterman_bound", p, n, n0)
    if -(-n // 2) < n0:
        res.skipped = "needs ceil(n/2) >= n0"
        return res
    q = p ** n
    cs = [c for c in range(1, p ** n0) if c % p]
    ds = [d for d in range(1, q) if d % p]
    pairs = [(c, d) for c in cs for d in ds]
    if sample is not None and sample < len(pairs):
        pairs = random.Random(seed).sample(pairs, sample)
    bound = p ** (2 - n / 2)
    for c, d in pairs:
        v = abs(ch.kloosterman_partial(c, d, p, n, n0))
        res.record(v / bound, v > bound * (1 + 1e-12), {"c": c, "d": d})
    return res


def dual_average_bound(p, n, n0, level) -> CheckResult:
    """|G_av^iota(phi, a)| <= (p-1) p^(n0 + 2 - n/2) when n > 2 n0; deviation is the ratio."""
    res = CheckResult("dual_average_bound", p, n, n0, level=level)
    if n <= 2 * n0:
        res.skipped = "needs n > 2 n0"
        return res
    bound = (p - 1) * p ** (n0 + 2 - n / 2)
    for phi in ch.enumerate_characters(p, n):
        tab = np.abs(ch.g_average_iota_table(phi, n0, level))
        worst = int(np.argmax(tab))
        ratio = float(tab[worst] / bound)
        res.record(ratio, ratio > 1 + 1e-12, {"phi_exponent": phi.e, "a": worst})
    return res


def root_number_modulus(p, n, level, tol=1e-10) -> CheckResult:
    res = CheckResult("root_number_modulus", p, n, 0, level=level)
    for phi in ch.enumerate_characters(p, n):
        d = abs(abs(ch.root_number(phi, level)) - 1)
        res.record(d, d > tol, {"phi_exponent": phi.e})
    return res
