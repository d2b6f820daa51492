"""Physical building blocks: imperfect sources, the asymmetric butterfly
BSM channel, and threshold detection with dark counts.

A butterfly module is one half of a BSM station: per-arm loss on its two
inputs followed by a 50:50 beam splitter feeding a pair of threshold
detectors.  Detector efficiency is folded into the arm transmissivities, so
no loss acts after the splitter.

Detector-port convention (verified against the closed-form table in the
tests): with the package beam-splitter convention and the call order
(user arm first, memory arm second), detector x0 receives the second
(memory-side) output slot and x1 the first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .fock import (
    FockCutoff,
    MultimodeOperator,
    apply_beam_splitter,
    apply_loss,
    beam_splitter_unitary,
    coherent_state,
    number_state,
    vacuum_projector,
)


class ParameterError(ValueError):
    """A hardware or protocol parameter violates its allowed range."""


@dataclass(frozen=True)
class SystemParams:
    """Hardware and protocol scalars; defaults are the nominal operating point."""

    p: float = 1e-4            # double-photon emission probability of the SPS
    mu: float = 1.0            # Alice's mean photon number |alpha|^2
    nu: float = 1.0            # Bob's mean photon number |beta|^2
    eta_w: float = 0.78        # memory writing efficiency
    eta_r: float = 0.87        # memory reading efficiency
    eta_d: float = 0.93        # detector quantum efficiency
    d_c: float = 1e-9          # dark count probability per pulse
    L_att: float = 25.0        # channel attenuation length [km]
    c: float = 2e5             # channel light speed [km/s]
    L_s: float = 5.0           # access segment length [km]
    L_rep: float = 100.0       # repeater span [km]
    n: int = 0                 # nesting level (number of swap rounds)
    N: int = 1                 # memories per node
    f: float = 1.16            # error-correction inefficiency
    R_S: float = 1e9           # source repetition rate [Hz]
    eta_sps: float = 0.5       # repeater source beam-splitter transmission
    swap_bsm_arms: bool = False        # exchange the BSM arm efficiencies
    neglect_double_double: bool = False  # drop simultaneous two-photon emission by both users

    def __post_init__(self):
        for name in ("p", "eta_w", "eta_r", "eta_d", "d_c", "eta_sps"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ParameterError(f"{name}={v} must lie in [0, 1]")
        for name in ("mu", "nu", "L_s"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be non-negative")
        for name in ("L_att", "c", "L_rep", "R_S"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive")
        if self.f < 1.0:
            raise ParameterError("error-correction inefficiency f must be >= 1")
        if self.n not in (0, 1, 2):
            raise ParameterError("nesting level n must be 0, 1 or 2")
        if self.N < 1:
            raise ParameterError("memories per node N must be >= 1")

    def with_(self, **kwargs) -> "SystemParams":
        return replace(self, **kwargs)

    @property
    def eta_user_arm(self) -> float:
        """Transmissivity seen by the user photon at a BSM: access path loss
        times detector efficiency (swappable for sensitivity analysis)."""
        a = channel_transmission(self.L_s, self) * self.eta_d
        b = self.eta_r * self.eta_d
        return b if self.swap_bsm_arms else a

    @property
    def eta_memory_arm(self) -> float:
        """Transmissivity seen by the memory photon at a BSM: reading
        efficiency times detector efficiency."""
        a = channel_transmission(self.L_s, self) * self.eta_d
        b = self.eta_r * self.eta_d
        return a if self.swap_bsm_arms else b


@dataclass(frozen=True)
class Numerics:
    """Discretization knobs; defaults are adequate for every shipped test."""

    phase_samples: int = 16    # discrete phases for phase-randomized sources
    leakage_tol: float = 1e-12  # coherent-state truncation tail bound
    memory_dim: int = 3        # per-memory-mode dimension (<= 2 excitations)
    extra_cutoff: int = 0      # cutoff headroom for convergence checks

    def coherent_cutoff(self, mu: float) -> FockCutoff:
        base = FockCutoff.for_coherent(mu, self.leakage_tol)
        return FockCutoff(base.n_max + self.extra_cutoff)

    @property
    def mem_dim(self) -> int:
        return self.memory_dim + self.extra_cutoff


@dataclass(frozen=True)
class ClickPattern:
    """Which detector of each pair clicked (exactly one per pair)."""

    r: int
    s: int
    u: int
    v: int

    def __post_init__(self):
        for name in ("r", "s", "u", "v"):
            if getattr(self, name) not in (0, 1):
                raise ParameterError("clicked detector index must be 0 or 1")

    def items(self):
        return (("r", self.r), ("s", self.s), ("u", self.u), ("v", self.v))


ALL_PATTERNS = tuple(
    ClickPattern(i, j, k, l)
    for i in (0, 1) for j in (0, 1) for k in (0, 1) for l in (0, 1)
)


def channel_transmission(l: float, params: SystemParams) -> float:
    """Path transmissivity exp(-l / L_att) of a fiber segment of length l km."""
    if l < 0:
        raise ParameterError("segment length must be non-negative")
    return math.exp(-l / params.L_att)


def sps_source_state(p: float, cutoff: FockCutoff) -> np.ndarray:
    """Imperfect single-photon source: (1-p)|1><1| + p|2><2|."""
    if not 0.0 <= p <= 1.0:
        raise ParameterError("double-photon probability must lie in [0, 1]")
    return (1.0 - p) * number_state(1, cutoff) + p * number_state(2, cutoff)


def phase_randomized_coherent(mu: float, k: int, cutoff: FockCutoff,
                              tol: float = 1e-12) -> list[tuple[float, np.ndarray]]:
    """Uniform K-point phase mixture of coherent projectors at |alpha|^2 = mu.

    Downstream click probabilities averaged over the K phases converge
    geometrically in K to the continuous phase average.
    """
    if k < 2:
        raise ParameterError("phase-sample count must be at least 2")
    alpha = math.sqrt(mu)
    return [
        (1.0 / k, coherent_state(alpha * np.exp(2j * math.pi * j / k), cutoff, tol))
        for j in range(k)
    ]


# ---------------------------------------------------------------------------
# Threshold detection
# ---------------------------------------------------------------------------

def click_measurement(mode_clicked: str, mode_other: str, d_c: float,
                      dim_clicked: int, dim_other: int):
    """Measurement operator for 'clicked fires, other stays silent' as a sum
    of mode-local products (a dark count may stand in for a missing photon)."""
    pc = vacuum_projector(dim_clicked)
    po = vacuum_projector(dim_other)
    ic = np.eye(dim_clicked, dtype=complex)
    return [
        ((1.0 - d_c), {mode_clicked: ic - pc, mode_other: po}),
        ((1.0 - d_c) * d_c, {mode_clicked: pc, mode_other: po}),
    ]


def pair_measure_operators(dim: int, d_c: float) -> dict[str, np.ndarray]:
    """The four exclusive outcomes of one detector pair as dense two-mode
    operators (on first-slot x0, second-slot x1 ordering)."""
    p0 = vacuum_projector(dim)
    i = np.eye(dim, dtype=complex)
    ip = i - p0
    m_x0 = (1.0 - d_c) * (np.kron(ip, p0) + d_c * np.kron(p0, p0))
    m_x1 = (1.0 - d_c) * (np.kron(p0, ip) + d_c * np.kron(p0, p0))
    m_none = (1.0 - d_c) ** 2 * np.kron(p0, p0)
    m_both = (
        np.kron(ip, ip)
        + d_c * (np.kron(ip, p0) + np.kron(p0, ip))
        + d_c ** 2 * np.kron(p0, p0)
    )
    return {"x0": m_x0, "x1": m_x1, "both": m_both, "none": m_none}


def _pair_trace(f_clicked: np.ndarray, f_other: np.ndarray, d_c: float) -> complex:
    tr_c = np.trace(f_clicked)
    v_c = f_clicked[0, 0]
    v_o = f_other[0, 0]
    return (1.0 - d_c) * ((tr_c - v_c) * v_o + d_c * v_c * v_o)


def click_probability(state: MultimodeOperator, pattern: ClickPattern, d_c: float) -> float:
    """Probability of one exclusive click pattern on the four detector pairs.

    The state must carry the eight detector-input modes r0..v1; the trace
    factorizes per pair on every term.
    """
    total = 0.0 + 0j
    idx = {m: state.index(m) for pair, _ in pattern.items() for m in (f"{pair}0", f"{pair}1")}
    for w, factors in state.terms:
        prod = w
        for pair, clicked in pattern.items():
            fc = factors[idx[f"{pair}{clicked}"]]
            fo = factors[idx[f"{pair}{1 - clicked}"]]
            prod *= _pair_trace(fc, fo, d_c)
        total += prod
    if abs(total.imag) > 1e-9:
        raise ArithmeticError(f"click probability has imaginary part {total.imag:.3g}")
    return float(total.real)


# ---------------------------------------------------------------------------
# Butterfly module
# ---------------------------------------------------------------------------

def butterfly_apply(state: MultimodeOperator, user_mode: str, memory_mode: str,
                    eta_user: float, eta_mem: float) -> MultimodeOperator:
    """Push two modes through one BSM half: per-arm loss, then a 50:50
    splitter; outputs are relabeled to the pair's detector inputs.

    The detector-pair label is the user mode's name; per the module-level
    convention the memory-side output slot feeds detector 0.
    """
    out = apply_loss(state, user_mode, eta_user)
    out = apply_loss(out, memory_mode, eta_mem)
    out = apply_beam_splitter(out, user_mode, memory_mode, 0.5)
    return out.relabeled({user_mode: f"{user_mode}1", memory_mode: f"{user_mode}0"})


@lru_cache(maxsize=16)
def _pair_detection_base(n_t: int, d_c: float) -> tuple[np.ndarray, np.ndarray]:
    """U^dag M_i U for the two single-click outcomes, as 4-tensors indexed
    [row_user, row_mem, col_user, col_mem]."""
    d = n_t + 1
    u = beam_splitter_unitary(n_t, 0.5)
    p0 = vacuum_projector(d)
    eye = np.eye(d, dtype=complex)
    ip = eye - p0
    # slot ordering (user, memory); x0 = memory slot, x1 = user slot
    m0 = (1.0 - d_c) * (np.kron(p0, ip) + d_c * np.kron(p0, p0))
    m1 = (1.0 - d_c) * (np.kron(ip, p0) + d_c * np.kron(p0, p0))
    z0 = (u.conj().T @ m0 @ u).reshape(d, d, d, d)
    z1 = (u.conj().T @ m1 @ u).reshape(d, d, d, d)
    return z0, z1


def _adjoint_loss_coeffs(d: int, eta: float) -> list[np.ndarray]:
    """c[j][n] = sqrt(C(n, j) eta^(n-j) (1-eta)^j), the Kraus amplitudes."""
    out = []
    for j in range(d):
        c = np.zeros(d)
        for n in range(j, d):
            c[n] = math.sqrt(math.comb(n, j) * eta ** (n - j) * (1.0 - eta) ** j)
        out.append(c)
    return out


def _apply_adjoint_loss(z4: np.ndarray, eta: float, axes: tuple[int, int]) -> np.ndarray:
    """Heisenberg-picture loss on one slot of a pair operator.

    sum_j K_j^dag X K_j shifts both the row and column index of the slot down
    by j with the Kraus amplitudes; vectorized over the other slot.
    """
    d = z4.shape[axes[0]]
    coeffs = _adjoint_loss_coeffs(d, eta)
    zm = np.moveaxis(z4, axes, (0, 1))
    out = np.zeros_like(zm)
    for j in range(d):
        c = coeffs[j][j:]
        if not np.any(c):
            continue
        out[j:, j:] += c[:, None, None, None] * c[None, :, None, None] * zm[: d - j, : d - j]
    return np.moveaxis(out, (0, 1), axes)


@lru_cache(maxsize=64)
def pair_click_matrices(n_user: int, n_mem: int, eta_user: float, eta_mem: float,
                        d_c: float) -> tuple[np.ndarray, np.ndarray]:
    """Heisenberg-picture butterfly+detection as bilinear forms.

    Returns (S0, S1) with S_i of shape (dim_user^2, dim_mem^2) such that for
    input factors F (user) and G (memory)

        P(click on detector i only) = vec(F) . S_i . vec(G)

    with row-major vectorization.  This is the fast path used by the key-rate
    pipeline; tests pin it against butterfly_apply + click_probability.
    """
    n_t = n_user + n_mem
    d = n_t + 1
    mats = []
    for z4 in _pair_detection_base(n_t, d_c):
        z4 = _apply_adjoint_loss(z4, eta_user, (0, 2))
        z4 = _apply_adjoint_loss(z4, eta_mem, (1, 3))
        # c = sum F[a,b] G[c,d] W[(b,d),(a,c)] with W4[b,d,a,c] = z4[b,d,a,c]
        s4 = z4.transpose(2, 0, 3, 1)  # S[a, b, c, d]
        du, dm = n_user + 1, n_mem + 1
        s = s4[:du, :du, :dm, :dm].reshape(du * du, dm * dm)
        mats.append(np.ascontiguousarray(s))
    return mats[0], mats[1]


def pair_click_values(f_user: np.ndarray, f_mem: np.ndarray, eta_user: float,
                      eta_mem: float, d_c: float) -> tuple[complex, complex]:
    """Click values (x0, x1) for a single product term's pair factors."""
    s0, s1 = pair_click_matrices(f_user.shape[0] - 1, f_mem.shape[0] - 1,
                                 eta_user, eta_mem, d_c)
    vu = f_user.reshape(-1)
    vm = f_mem.reshape(-1)
    return complex(vu @ s0 @ vm), complex(vu @ s1 @ vm)


# ---------------------------------------------------------------------------
# Closed-form input/output table of the butterfly module
# ---------------------------------------------------------------------------

CLOSED_FORM_ROWS = ((0, 0), (1, 1), (2, 2), (1, 0), (0, 1), (1, 2), (2, 1))


def butterfly_closed_form(row: tuple[int, int], eta_a: float, eta_b: float,
                          mu: float, alpha: complex | None = None,
                          d_c: float = 0.0, detector: int = 0) -> complex:
    """Published closed-form click value for a coherent-state user input and
    a number-state (ket, bra) memory input, evaluated verbatim.

    ``row`` is the memory operator |ket><bra|; eta_a acts on the coherent
    arm and eta_b on the number-state arm.  ``detector`` selects x0 or x1;
    per the table's caption the asymmetric rows flip sign on x1.  The
    diagonal rows are probabilities; off-diagonal rows are complex weights.
    """
    if row not in CLOSED_FORM_ROWS:
        raise ParameterError(f"unsupported input-operator row {row}")
    if detector not in (0, 1):
        raise ParameterError("detector must be 0 or 1")
    if alpha is None:
        alpha = math.sqrt(mu)
    e_half = math.exp(-eta_a * mu / 2.0)
    e_full = math.exp(-eta_a * mu)
    pre = 1.0 - d_c
    ket, bra = row
    if row == (0, 0):
        val = pre * (e_half * (1.0 - e_half) + d_c * e_full)
    elif row == (1, 1):
        val = pre * (
            (eta_b / 2.0) * e_half * (1.0 + eta_a * mu / 2.0)
            + e_half * (1.0 - eta_b) * (1.0 - e_half)
            + d_c * (1.0 - eta_b) * (1.0 - e_full)
        )
    elif row == (2, 2):
        val = pre * (
            (eta_b ** 2 / 4.0) * e_half
            * (1.0 + (eta_a ** 2 / 4.0) * mu ** 2 * (0.5 - 8.0 * e_half) + eta_a * mu)
            + eta_b * e_half * (1.0 - eta_b) * (1.0 + eta_a * mu / 2.0)
            + e_half * (1.0 - eta_b) ** 2 * (1.0 - e_half)
            + d_c * ((eta_a ** 2 * eta_b ** 2 / 2.0) * e_full * mu ** 2
                     + e_full * (1.0 - eta_b) ** 2)
        )
    elif row in ((1, 0), (0, 1)):
        val = pre * 0.5 * math.sqrt(eta_a * eta_b) * alpha * e_half
    else:  # (1, 2) and (2, 1)
        val = pre * math.sqrt(eta_a * eta_b / 2.0) * alpha * (
            eta_b / 2.0 - eta_a * eta_b / 8.0 - 1.0
        )
    if detector == 1 and ket != bra:
        val = -val
    return complex(val)


def butterfly_numeric_value(ket: int, bra: int, eta_a: float, eta_b: float,
                            mu: float, d_c: float, detector: int = 0,
                            leakage_tol: float = 1e-12) -> complex:
    """Fock-engine counterpart of butterfly_closed_form (the oracle side)."""
    cutoff = FockCutoff.for_coherent(mu, leakage_tol) if mu > 0 else FockCutoff(2)
    f_user = coherent_state(math.sqrt(mu), cutoff, leakage_tol)
    dim_m = max(ket, bra) + 1 + 1
    f_mem = np.zeros((dim_m, dim_m), dtype=complex)
    f_mem[ket, bra] = 1.0
    c0, c1 = pair_click_values(f_user, f_mem, eta_a, eta_b, d_c)
    return c0 if detector == 0 else c1


def closed_form_discrepancy_report(eta_grid, mu_grid, d_c_values,
                                   tol: float = 1e-9) -> dict:
    """Worst deviation of every printed closed-form row from the numeric
    engine over a parameter grid.

    The two-photon rows are suspected misprints; the gap is reported here
    rather than silently patched, and the numeric engine remains the ground
    truth everywhere.
    """
    report = {}
    for row in CLOSED_FORM_ROWS:
        worst = 0.0
        at = None
        for eta_a in eta_grid:
            for eta_b in eta_grid:
                for mu in mu_grid:
                    for d_c in d_c_values:
                        for det in (0, 1):
                            cf = butterfly_closed_form(row, eta_a, eta_b, mu,
                                                       d_c=d_c, detector=det)
                            nm = butterfly_numeric_value(row[0], row[1], eta_a,
                                                         eta_b, mu, d_c, det)
                            dev = abs(cf - nm)
                            if dev > worst:
                                worst = dev
                                at = (float(eta_a), float(eta_b), float(mu),
                                      float(d_c), det)
        report[row] = {"max_abs_deviation": worst, "at": at,
                       "consistent": worst < tol}
    return report
