"""Closed-form constants and exponents of the measure-decay estimates.

Everything is evaluated with mpmath at 50 significant digits and exported
both as floats and as (mantissa, base-10 exponent) pairs, because the
one-step opening gain M overflows 64-bit floats already at moderate
ellipticity ratios.  Integer-valued constants (integral barrier exponents)
are additionally reported as exact Python integers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath as mp

from .errors import ParameterError
from .pucci import EllipticityParams

__all__ = ["ConstantsReport", "compute_constants", "polynomial_decay_check"]

_DPS = 50

K_CONTACT = 32.0  # opening at which the measure estimate concludes
_SEED_NUMERATOR = 1.0  # seed opening is 1/n


def _mpf_pair(x: mp.mpf) -> tuple[float, int]:
    """(mantissa in [1, 10), exponent) rendering of a positive mp float."""
    if x <= 0:
        raise ParameterError("log-space rendering needs a positive value")
    e = int(mp.floor(mp.log10(x)))
    mant = float(x / mp.mpf(10) ** e)
    return mant, e


@dataclass(frozen=True)
class ConstantsReport:
    """All explicit constants for one set of ellipticity parameters.

    Openings/exponents:
        sigma:         bad-measure fraction of the one-step estimate
        sigma_strong:  its improvement for strong supersolutions
        m, C:          barrier exponent and normalization
        M1, M2, M:     localization ceiling, localization opening, one-step
                       opening gain (M = 256 n^2 M2 = 884736 n^3 (36n)^q)
        eps_visc:      log(1/sigma)/log(M)
        eps_strong:    log(1/sigma_strong)/log(M)
        eps_bound_printed / eps_bound_corrected: the closed-form lower bound
            for eps_visc with the bracket exponent as printed (q) and with
            it raised by one (q+1); only the corrected variant actually lies
            below eps_visc (see the package README).
        eps_conjectured: 2 / (ratio + 1), the conjectured optimal exponent
        t0:            threshold multiplier 4 M for the decay estimate
    """

    p: EllipticityParams
    alpha1: float
    alpha2: float
    alpha3: float
    m: float
    C: float
    M1: float
    M2: float
    M: float
    M1_exact: int | None
    M2_exact: int | None
    M_exact: int | None
    sigma: float
    sigma_strong: float
    K_contact: float
    K_seed: float
    eps_visc: float
    eps_strong: float
    eps_bound_printed: float
    eps_bound_corrected: float
    eps_conjectured: float
    t0: float
    log10_M: float
    M_mantissa_exp: tuple[float, int]
    t0_mantissa_exp: tuple[float, int]

    def as_row(self) -> dict:
        row = {
            "n": self.p.n,
            "lam": self.p.lam,
            "Lam": self.p.Lam,
            "ratio": self.p.ratio,
            "alpha1": self.alpha1,
            "alpha2": self.alpha2,
            "alpha3": self.alpha3,
            "m": self.m,
            "C": self.C,
            "M1": self.M1,
            "M2": self.M2,
            "M": self.M,
            "sigma": self.sigma,
            "sigma_strong": self.sigma_strong,
            "K_contact": self.K_contact,
            "K_seed": self.K_seed,
            "eps_visc": self.eps_visc,
            "eps_strong": self.eps_strong,
            "eps_bound_printed": self.eps_bound_printed,
            "eps_bound_corrected": self.eps_bound_corrected,
            "eps_conjectured": self.eps_conjectured,
            "t0": self.t0,
            "log10_M": self.log10_M,
            "M_mantissa": self.M_mantissa_exp[0],
            "M_exp10": self.M_mantissa_exp[1],
        }
        return row


def compute_constants(p: EllipticityParams) -> ConstantsReport:
    """Evaluate every explicit constant for the given ellipticity parameters."""
    with mp.workdps(_DPS):
        n = mp.mpf(p.n)
        lam = mp.mpf(p.lam)
        Lam = mp.mpf(p.Lam)

        alpha1 = 1 / (4 * mp.sqrt(n))
        alpha2 = 1 / (12 * mp.sqrt(n))
        alpha3 = 1 / (24 * mp.sqrt(n))

        m = mp.mpf(max((p.n - 1) * p.Lam / (2.0 * p.lam) - 0.5, 0.5))
        q = (n - 1) * Lam / lam - 1
        q_eff = q if q > 1 else mp.mpf(1)

        # Log-space throughout: (36n)^q_eff overflows floats quickly.
        log_M1 = mp.log(8) + q_eff * mp.log(36 * n)
        log_M2 = mp.log(432 * n) + log_M1
        log_M = mp.log(256 * n * n) + log_M2
        M1 = mp.e**log_M1
        M2 = mp.e**log_M2
        M = mp.e**log_M
        C = M1 * (alpha3**2 / 2) ** m

        # Exact integers when the bracket exponent is integral.
        q_float = max(1.0, (p.n - 1) * p.Lam / p.lam - 1.0)
        exact = None
        if float(q_float) == int(q_float):
            exact = 8 * (36 * p.n) ** int(q_float)
        M1_exact = exact
        M2_exact = None if exact is None else 432 * p.n * exact
        M_exact = None if M2_exact is None else 256 * p.n**2 * M2_exact

        good_fraction = (lam / (lam + (n - 1) * Lam)) ** n * alpha1**n
        good_fraction_strong = (lam / Lam) ** (n - 1) * alpha1**n
        sigma = 1 - good_fraction
        sigma_strong = 1 - good_fraction_strong

        eps_visc = -mp.log1p(-good_fraction) / log_M
        eps_strong = -mp.log1p(-good_fraction_strong) / log_M

        log_bracket_printed = mp.log(mp.mpf(10) ** 5 * n**3) + q_eff * mp.log(36 * n)
        log_bracket_corrected = mp.log(mp.mpf(10) ** 5 * n**3) + (q_eff + 1) * mp.log(36 * n)
        eps_bound_printed = good_fraction / log_bracket_printed
        eps_bound_corrected = good_fraction / log_bracket_corrected

        eps_conjectured = 2 / (Lam / lam + 1)
        t0 = 4 * M

        report = ConstantsReport(
            p=p,
            alpha1=float(alpha1),
            alpha2=float(alpha2),
            alpha3=float(alpha3),
            m=float(m),
            C=float(C),
            M1=float(M1),
            M2=float(M2),
            M=float(M),
            M1_exact=M1_exact,
            M2_exact=M2_exact,
            M_exact=M_exact,
            sigma=float(sigma),
            sigma_strong=float(sigma_strong),
            K_contact=K_CONTACT,
            K_seed=_SEED_NUMERATOR / p.n,
            eps_visc=float(eps_visc),
            eps_strong=float(eps_strong),
            eps_bound_printed=float(eps_bound_printed),
            eps_bound_corrected=float(eps_bound_corrected),
            eps_conjectured=float(eps_conjectured),
            t0=float(t0),
            log10_M=float(log_M / mp.log(10)),
            M_mantissa_exp=_mpf_pair(M),
            t0_mantissa_exp=_mpf_pair(t0),
        )

    _check_invariants(report)
    return report


def _check_invariants(r: ConstantsReport) -> None:
    if not (0.0 < r.sigma < 1.0) or not (0.0 < r.sigma_strong < 1.0):
        raise AssertionError("measure fractions must lie in (0, 1)")
    if r.sigma_strong > r.sigma + 1e-15:
        raise AssertionError("strong-case fraction must not exceed the viscosity one")
    if not (r.eps_visc > 0 and r.eps_strong >= r.eps_visc - 1e-18):
        raise AssertionError("exponent ordering violated")
    # log(1/a) > 1 - a on (0, 1), so eps_visc strictly dominates the crude bound.
    crude = (1.0 - r.sigma) / (r.log10_M * math.log(10.0))
    if not r.eps_visc > crude:
        raise AssertionError("eps_visc must exceed its first-order bound")


def polynomial_decay_check(n: int, ratios) -> list[dict]:
    """Tabulate how the exponents decay along an ellipticity-ratio ladder.

    Emits, per ratio r, ``eps_visc * r**(n+1)`` and ``eps_strong * r**n``;
    both products must stay bounded away from zero for the decay to be
    polynomial of those orders.
    """
    ratios = [float(r) for r in ratios]
    if any(r < 1 for r in ratios):
        raise ParameterError("ratios must be >= 1")
    rows = []
    for ratio in ratios:
        rep = compute_constants(EllipticityParams(n=n, lam=1.0, Lam=ratio))
        rows.append(
            {
                "n": n,
                "ratio": ratio,
                "eps_visc": rep.eps_visc,
                "eps_strong": rep.eps_strong,
                "eps_visc_scaled": rep.eps_visc * ratio ** (n + 1),
                "eps_strong_scaled": rep.eps_strong * ratio**n,
                "eps_conjectured": rep.eps_conjectured,
                "eps_bound_printed": rep.eps_bound_printed,
                "eps_bound_corrected": rep.eps_bound_corrected,
                "printed_bound_exceeds_eps": rep.eps_bound_printed > rep.eps_visc,
            }
        )
    return rows
