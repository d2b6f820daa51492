"""Acceptable-click-pattern statistics and secret key rate bounds.

A round succeeds when every one of the four detector pairs reports exactly
one click.  The per-basis probability of such a pattern, averaged over the
four equally likely bit pairs, and its split into correct and erroneous
sifted bits feed the key-rate bound.

Per detector pair, type I means the two same-index detectors fired
(r0 with s0, or r1 with s1); type II means opposite indices.  Bob flips his
bit in the z basis always, and in the x basis exactly when the two BSM types
disagree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .components import (
    ClickPattern,
    Numerics,
    ParameterError,
    SystemParams,
    pair_click_matrices,
)
from .encoder import alice_rails, bob_rails
from .repeater import LinkState, RepeaterOutput

SOURCE_PAIRS = ("11", "pp", "munu")


@dataclass(frozen=True)
class GammaTable:
    """Single-click-pattern statistics for one basis and source pair."""

    basis: str
    source_pair: str
    gamma: float       # probability of an acceptable pattern
    gamma_c: float     # part leading to correct sifted bits
    gamma_e: float     # part leading to errors

    @property
    def epsilon(self) -> float:
        """QBER conditioned on an acceptable pattern."""
        if self.gamma <= 0.0:
            return 0.0
        return self.gamma_e / self.gamma


def bsm_type(pattern: ClickPattern, side: str) -> str:
    """Classify one side's BSM outcome: same detector indices mean type I."""
    if side == "alice":
        return "I" if pattern.r == pattern.s else "II"
    if side == "bob":
        return "I" if pattern.u == pattern.v else "II"
    raise ParameterError(f"side must be 'alice' or 'bob', got {side!r}")


def bit_assignment(basis: str, type_a: str, type_b: str) -> str:
    """Bob's sifting action given the two announced BSM types."""
    if basis == "z":
        return "flip"
    if basis == "x":
        return "keep" if type_a == type_b else "flip"
    raise ParameterError(f"basis must be 'z' or 'x', got {basis!r}")


def _pattern_is_correct(basis: str, pattern: ClickPattern, m: int, n: int) -> bool:
    """Whether Alice and Bob end up with identical bits after sifting."""
    action = bit_assignment(basis, bsm_type(pattern, "alice"), bsm_type(pattern, "bob"))
    bob_final = n ^ (action == "flip")
    return bob_final == m


def _click_tensor(user_terms, user_idx, mem_terms, mem_idx, eta_user, eta_mem, d_c):
    """C[i, a, b]: click value of detector i for user factor a, memory factor b."""
    fu = [fs[user_idx] for _, fs in user_terms]
    gm = [fs[mem_idx] for _, fs in mem_terms]
    du = fu[0].shape[0]
    dm = gm[0].shape[0]
    s0, s1 = pair_click_matrices(du - 1, dm - 1, eta_user, eta_mem, d_c)
    vu = np.stack([f.reshape(-1) for f in fu])
    vm = np.stack([g.reshape(-1) for g in gm])
    return np.stack([vu @ s0 @ vm.T, vu @ s1 @ vm.T])


def _pattern_probabilities(alice, bob, link, params: SystemParams) -> np.ndarray:
    """P[i, j, k, l] for the 16 exclusive click patterns, by contracting the
    per-pair click tensors over the term indices of the four input blocks."""
    eta_u, eta_m = params.eta_user_arm, params.eta_memory_arm
    d_c = params.d_c
    ir, is_ = alice.index("r"), alice.index("s")
    iu, iv = bob.index("u"), bob.index("v")
    ia, ib = link.rho.index("A"), link.rho.index("B")
    lt = link.rho.terms
    cr = _click_tensor(alice.terms, ir, lt, ia, eta_u, eta_m, d_c)
    cs = _click_tensor(alice.terms, is_, lt, ia, eta_u, eta_m, d_c)
    cu = _click_tensor(bob.terms, iu, lt, ib, eta_u, eta_m, d_c)
    cv = _click_tensor(bob.terms, iv, lt, ib, eta_u, eta_m, d_c)
    wa = np.array([w for w, _ in alice.terms])
    wb = np.array([w for w, _ in bob.terms])
    wl = np.array([w for w, _ in lt])
    p = np.einsum("iab,jac,kdb,ldc,a,b,c,d->ijkl", cr, cs, cu, cv,
                  wa, wl, wl, wb, optimize=True)
    if np.abs(p.imag).max() > 1e-9:
        raise ArithmeticError("pattern probabilities are not real")
    return p.real


def _gamma_sums(params: SystemParams, basis: str, kind_a: str, kind_b: str,
                link: LinkState, numerics: Numerics) -> tuple[float, float]:
    """(gamma, gamma_c) for explicit per-user source kinds."""
    gamma = 0.0
    gamma_c = 0.0
    idx = np.arange(2)
    type_a_is_i = (idx[:, None] == idx[None, :])          # [i, j]
    type_b_is_i = type_a_is_i.copy()                      # [k, l]
    matched = (type_a_is_i[:, :, None, None] == type_b_is_i[None, None, :, :])
    for m in (0, 1):
        alice = alice_rails(basis, m, kind_a, params, numerics)
        for n in (0, 1):
            bob = bob_rails(basis, n, kind_b, params, numerics)
            p = _pattern_probabilities(alice, bob, link, params)
            gamma += p.sum() / 4.0
            if basis == "z":
                if (m + n) == 1:
                    gamma_c += p.sum() / 4.0
            else:
                mask = matched if (m ^ n) == 0 else ~matched
                gamma_c += p[mask].sum() / 4.0
    return gamma, gamma_c


def gamma_table(params: SystemParams, basis: str, source_pair: str,
                link: LinkState, numerics: Numerics = Numerics()) -> GammaTable:
    """Full click-pattern statistics for one basis and source pair.

    ``link`` is the heralded memory state; the two repeater links entering a
    round are independent copies of it.
    """
    if source_pair not in SOURCE_PAIRS:
        raise ParameterError(f"source pair must be one of {SOURCE_PAIRS}")
    if source_pair == "11":
        gamma, gamma_c = _gamma_sums(params, basis, "single", "single", link, numerics)
    elif source_pair == "munu":
        gamma, gamma_c = _gamma_sums(params, basis, "coherent", "coherent", link, numerics)
    elif params.neglect_double_double:
        # reproduce the small-p approximation that drops simultaneous
        # two-photon emission by both users
        p = params.p
        g11 = _gamma_sums(params, basis, "single", "single", link, numerics)
        g12 = _gamma_sums(params, basis, "single", "double", link, numerics)
        g21 = _gamma_sums(params, basis, "double", "single", link, numerics)
        gamma = (1 - p) ** 2 * g11[0] + p * (1 - p) * (g12[0] + g21[0])
        gamma_c = (1 - p) ** 2 * g11[1] + p * (1 - p) * (g12[1] + g21[1])
    else:
        gamma, gamma_c = _gamma_sums(params, basis, "sps", "sps", link, numerics)
    return GammaTable(basis, source_pair, gamma, gamma_c, gamma - gamma_c)


def binary_entropy(x: float) -> float:
    """Shannon binary entropy in bits, continuously extended to the endpoints."""
    if not 0.0 <= x <= 1.0:
        raise ParameterError("binary entropy argument must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


@dataclass(frozen=True)
class KeyRateReport:
    """Key-rate evaluation at one parameter point, in both normalizations."""

    source_kind: str
    q11_z: float               # single-photon gain in the z basis
    e11_x: float               # single-photon QBER in the x basis
    q_signal_z: float          # full-source gain in the z basis
    e_signal_z: float          # full-source QBER in the z basis
    r_per_pulse: float         # secret bits per transmitted pulse
    r_per_memory: float        # secret bits per second per logical memory
    regime: str                # source_limited | repeater_limited
    params: SystemParams
    R_ent: float
    R_rep: float
    N_QM: int

    @property
    def secure(self) -> bool:
        return bool(self.r_per_pulse > 0.0)


def key_rate(params: SystemParams, source_kind: str, repeater_out: RepeaterOutput,
             numerics: Numerics = Numerics(),
             tables_11: tuple[GammaTable, GammaTable] | None = None) -> KeyRateReport:
    """Lower bound on the secret key rate for the configured link.

    The per-pulse figure is the bracketed bound alone; the per-memory figure
    multiplies it by the repeater-limited prefactor R_ent/2.  The regime flag
    reports which figure is operative at the configured source rate and
    memory count.  ``tables_11`` short-circuits the intensity-independent
    single-photon tables when scanning source intensities.
    """
    if source_kind not in ("sps", "coherent"):
        raise ParameterError("source kind must be 'sps' or 'coherent'")
    link = repeater_out.link
    rates = repeater_out.rates
    if tables_11 is not None:
        t11z, t11x = tables_11
    else:
        t11z = gamma_table(params, "z", "11", link, numerics)
        t11x = gamma_table(params, "x", "11", link, numerics)
    y11 = t11z.gamma
    e11x = t11x.epsilon
    if source_kind == "sps":
        tz = gamma_table(params, "z", "pp", link, numerics)
        q11 = (1.0 - params.p) ** 2 * y11
    else:
        tz = gamma_table(params, "z", "munu", link, numerics)
        q11 = params.mu * params.nu * math.exp(-params.mu - params.nu) * y11
    q_signal = tz.gamma
    e_signal = tz.epsilon
    bracket = q11 * (1.0 - binary_entropy(e11x)) \
        - q_signal * params.f * binary_entropy(e_signal)
    bracket = max(bracket, 0.0)
    regime = "source_limited" if 2.0 * params.R_S < rates.R_rep else "repeater_limited"
    return KeyRateReport(
        source_kind=source_kind,
        q11_z=q11,
        e11_x=e11x,
        q_signal_z=q_signal,
        e_signal_z=e_signal,
        r_per_pulse=bracket,
        r_per_memory=rates.R_ent / 2.0 * bracket,
        regime=regime,
        params=params,
        R_ent=rates.R_ent,
        R_rep=rates.R_rep,
        N_QM=rates.N_QM,
    )
