import math
import numpy as np
import pytest

from heckelab import characters as ch
from heckelab.characters import CharacterTable
from heckelab.lfunctions import (
    InsufficientCoefficients,
    afe_terms_needed,
    afe_value,
    completed_lambda,
    direct_value,
    fe_spec,
    lambda_factor,
    twisted_fe_residual,
)
from heckelab.numerics import GammaFactorSpec, cutoff_V_many, gamma_factor

STRIP = {12: [5.3, 6.0, 6.4 + 3j, 5.6 - 7j, 6.9 + 0.5j], 2: [0.3, 1.0, 1.4 + 3j, 0.6 - 7j, 1.9 + 0.5j]}


def rel(a, b):
    return abs(a - b) / abs(b)


def test_delta_direct_sum_agreement(series):
    d = series("delta", 50000)
    afe = afe_value(d, None, 7.5).value
    direct = direct_value(d, None, 7.5, 50000)
    assert rel(afe, direct) < 1e-8
    assert abs(afe.imag) < 1e-14 * abs(afe)


def test_partial_sums_cauchy(series):
    d = series("delta", 100000)
    a = direct_value(d, None, 8.0, 10 ** 4)
    b = direct_value(d, None, 8.0, 10 ** 5)
    assert abs(a - b) < 1e-9


def test_direct_warns_outside_convergence(series):
    d = series("delta", 100)
    with pytest.warns(RuntimeWarning):
        direct_value(d, None, 6.0, 100)


def test_principal_character_rearrangement(series):
    d = series("delta", 20000)
    s = 8.0
    full = direct_value(d, None, s, 20000)
    drop = sum(d[m] * m ** -s for m in range(5, 20001, 5))
    assert abs(direct_value(d, None, s, 20000, coprime_to=5) - (full - drop)) < 1e-15


@pytest.mark.parametrize("label,phi", [("delta", None), ("delta", CharacterTable(5, 2, 1)), ("11a", CharacterTable(5, 2, 3))])
def test_y_invariance(series, label, phi):
    s0 = series(label, 10)
    k = s0.weight
    Q = s0.level * (1 if phi is None else phi.modulus ** 2)
    need = max(max(afe_terms_needed(k, Q, k / 2, f * math.sqrt(Q))) for f in (0.5, 1, 2, 4))
    f = series(label, need)
    vals = [afe_value(f, phi, k / 2, y=fac * math.sqrt(Q)).value for fac in (0.5, 1, 2, 4)]
    scale = max(abs(v) for v in vals)
    assert max(abs(v - vals[1]) for v in vals) < 1e-8 * scale


def _afe_fixed_line(f, phi, s, abscissa):
    """The AFE summed directly with V on a fixed contour line (no grid)."""
    k = f.weight
    spec = fe_spec(f, phi)
    Q = spec.conductor
    y = math.sqrt(Q)
    M = max(afe_terms_needed(k, Q, s, y))
    m = np.arange(1, M + 1)
    a = np.array([f[i] for i in m], dtype=float)
    chi = phi.values()[m % phi.modulus]
    v1, _ = cutoff_V_many(1, s, m / y, abscissa=abscissa)
    v2, _ = cutoff_V_many(2, k - s, m * y / Q, abscissa=abscissa)
    S1 = np.sum(a * chi * m ** -s * v1)
    S2 = np.sum(a * chi.conj() * m ** -(k - s) * v2)
    return (S1 + spec.constant * Q ** (k / 2 - s) * S2) / gamma_factor(s, GammaFactorSpec(k))


def test_11a_twist_contour_shift(series):
    phi = CharacterTable(5, 2, 1)
    f = series("11a", 20000)
    ours = afe_value(f, phi, 1.0).value
    shifted = _afe_fixed_line(f, phi, 1.0, 3.0)
    assert rel(ours, shifted) < 1e-8


def test_conjugation_symmetry(series):
    f = series("11a", 20000)
    phi = CharacterTable(5, 2, 2)
    s = 1.2 + 0.4j
    a = afe_value(f, phi, s).value
    b = afe_value(f, phi.conj(), s.conjugate()).value
    assert abs(a - b.conjugate()) < 1e-10 * abs(a)


def test_real_s_real_value(series):
    f = series("37a", 5000)
    v = afe_value(f, None, 1.3).value
    assert abs(v.imag) < 1e-14


def test_completed_lambda_ratio(series):
    f = series("delta", 2000)
    phi = CharacterTable(3, 2, 1)
    s = 6.2 + 1j
    lam = completed_lambda(f, phi, s).value
    val = afe_value(f, phi, s).value
    Q = 81
    assert abs(lam / val - Q ** (s / 2) * gamma_factor(s, GammaFactorSpec(12))) < 1e-13 * abs(lam / val)
    assert lambda_factor(f, phi, s) == pytest.approx(Q ** (s / 2) * gamma_factor(s, GammaFactorSpec(12)), rel=1e-14)


@pytest.mark.parametrize("label", ["delta", "11a", "14a", "15a", "17a", "37a"])
def test_untwisted_fe(series, label):
    f = series(label, 5000)
    for s in STRIP[f.weight]:
        assert twisted_fe_residual(f, None, s) < 1e-8


def test_delta_lambda_symmetry(series):
    f = series("delta", 2000)
    a = completed_lambda(f, None, 5.3, y=1.25).value
    b = completed_lambda(f, None, 6.7, y=1.6).value
    assert abs(a - b) < 1e-8 * abs(a)


def test_37a_central_zero(series):
    f = series("37a", 5000)
    assert abs(completed_lambda(f, None, 1.0).value) < 1e-6
    assert abs(afe_value(f, None, 1.0).value) < 1e-6


def test_twisted_fe_delta_mod_25(series):
    f = series("delta", 5000)
    for phi in ch.enumerate_characters(5, 2):
        assert twisted_fe_residual(f, phi, 6.0) < 1e-6
        assert twisted_fe_residual(f, phi, 6.0, flip=True) > 1e-2


def test_twisted_fe_11a_mod_27(series):
    f = series("11a", 20000)
    for phi in ch.enumerate_characters(3, 3):
        assert twisted_fe_residual(f, phi, 1.0) < 1e-6
        assert twisted_fe_residual(f, phi, 1.0, flip=True) > 1e-2


def test_twisted_fe_off_center(series):
    f = series("17a", 20000)
    phi = CharacterTable(3, 3, 2)
    assert twisted_fe_residual(f, phi, 1.3 + 2j) < 1e-6


def test_fe_constant_unit():
    from heckelab.newforms import delta_series

    d = delta_series(10)
    for phi in ch.enumerate_characters(5, 3):
        assert fe_spec(d, phi).check()


def test_insufficient_coefficients(series):
    f = series("delta", 20)
    with pytest.raises(InsufficientCoefficients):
        afe_value(f, CharacterTable(5, 2, 1), 6.0)


def test_tolerance_flag(series):
    f = series("delta", 5000)
    res = afe_value(f, None, 6.0, tol=1e-18)
    assert "tail_exceeds_tol" in res.flags
    ok = afe_value(f, None, 6.0)
    assert ok.flags == () and ok.tail_estimate < 1e-10


def test_outside_strip_note(series):
    f = series("delta", 5000)
    assert "outside_strip" in afe_value(f, None, 7.5).notes
    assert afe_value(f, None, 6.5).notes == ()


def test_rescaled_series_not_aliased(series):
    from heckelab.newforms import CoefficientSeries

    class Unnormalized(CoefficientSeries):
        def __post_init__(self):
            pass

    f = series("11a", 5000)
    g = Unnormalized(f.spec, tuple(2 * a for a in f.coeffs))
    phi = CharacterTable(5, 2, 1)
    a = afe_value(f, phi, 1.0).value
    assert abs(afe_value(g, phi, 1.0).value - 2 * a) < 1e-13 * abs(a)
