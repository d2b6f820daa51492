"""Truncated Fock-space operator algebra on labeled optical modes.

Multimode operators are stored as weighted sums of per-mode matrix factors
(a "term list").  Every channel used in this package acts on at most two
modes at a time, so linearity over terms keeps 8-mode computations cheap:
a two-mode operation densifies only the two factors involved and splits the
result back into separable terms with an operator Schmidt decomposition.

Beam-splitter sign convention (fixed throughout the package):

    a_dag -> sqrt(t) a_dag + sqrt(1-t) b_dag
    b_dag -> sqrt(t) b_dag - sqrt(1-t) a_dag

where ``a`` is the first mode argument and ``b`` the second.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import poisson

# Terms whose weight (with unit-norm factors) falls below this are dropped
# after each channel application; see MultimodeOperator.cleaned.
DROP_TOL = 1e-15


class TruncationError(Exception):
    """A requested state or operation does not fit in the Fock cutoff."""


@dataclass(frozen=True)
class FockCutoff:
    """Photon-number truncation for a single mode (dimension n_max + 1)."""

    n_max: int

    def __post_init__(self):
        if self.n_max < 2:
            raise ValueError("n_max must be at least 2 (two-photon events must be representable)")

    @property
    def dim(self) -> int:
        return self.n_max + 1

    @staticmethod
    def for_coherent(mu: float, tol: float = 1e-12) -> "FockCutoff":
        """Smallest cutoff whose Poisson tail mass beyond n_max is below tol."""
        if mu < 0:
            raise ValueError("mean photon number must be non-negative")
        n = 2
        while poisson.sf(n, mu) >= tol:
            n += 1
            if n > 200:
                raise TruncationError(f"no cutoff below 200 reaches leakage {tol} at mu={mu}")
        return FockCutoff(n)


def coherent_leakage(mu: float, n_max: int) -> float:
    """Poisson tail mass beyond n_max for mean photon number mu."""
    return float(poisson.sf(n_max, mu))


# ---------------------------------------------------------------------------
# Single-mode operators (plain complex matrices)
# ---------------------------------------------------------------------------

def number_state(n: int, cutoff: FockCutoff) -> np.ndarray:
    """Projector |n><n| as a dense matrix."""
    if n < 0 or n > cutoff.n_max:
        raise TruncationError(f"photon number {n} exceeds cutoff {cutoff.n_max}")
    m = np.zeros((cutoff.dim, cutoff.dim), dtype=complex)
    m[n, n] = 1.0
    return m


def coherent_vector(alpha: complex, cutoff: FockCutoff, tol: float = 1e-12) -> np.ndarray:
    """Truncated coherent-state ket, renormalized to unit norm."""
    alpha = complex(alpha)
    mu = abs(alpha) ** 2
    leak = coherent_leakage(mu, cutoff.n_max)
    if leak >= tol:
        raise TruncationError(
            f"coherent state mu={mu:.4g} leaks {leak:.3g} beyond n_max={cutoff.n_max} (tol {tol:.1g})"
        )
    if alpha == 0:
        vec = np.zeros(cutoff.dim, dtype=complex)
        vec[0] = 1.0
        return vec
    n = np.arange(cutoff.dim)
    log_fact = np.cumsum(np.concatenate(([0.0], np.log(np.arange(1, cutoff.dim)))))
    vec = np.exp(-mu / 2.0 + n * np.log(alpha) - log_fact / 2.0)
    return vec / np.linalg.norm(vec)


def coherent_state(alpha: complex, cutoff: FockCutoff, tol: float = 1e-12) -> np.ndarray:
    """Truncated projector |alpha><alpha|, renormalized to trace one."""
    vec = coherent_vector(alpha, cutoff, tol)
    return np.outer(vec, vec.conj())


def vacuum_projector(dim: int) -> np.ndarray:
    m = np.zeros((dim, dim), dtype=complex)
    m[0, 0] = 1.0
    return m


def parity_operator(dim: int) -> np.ndarray:
    """diag((-1)^n); the photon-number parity phase flip."""
    return np.diag((-1.0 + 0j) ** np.arange(dim))


@lru_cache(maxsize=None)
def _loss_kraus(dim: int, eta: float) -> tuple[np.ndarray, ...]:
    """Kraus operators of the pure-loss channel with transmissivity eta.

    Exactly trace preserving on the truncated space since loss never raises
    photon number.
    """
    ops = []
    for j in range(dim):
        k = np.zeros((dim, dim), dtype=complex)
        for n in range(j, dim):
            k[n - j, n] = math.sqrt(math.comb(n, j) * eta ** (n - j) * (1.0 - eta) ** j)
        if np.any(k):
            ops.append(k)
    return tuple(ops)


@lru_cache(maxsize=None)
def beam_splitter_unitary(n_total: int, t: float) -> np.ndarray:
    """Two-mode beam-splitter unitary on a pair truncated at n_total per mode.

    Built from the exact photon-number expansion of the convention above, so
    it is exactly unitary on the sector with total photon number <= n_total.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError("transmissivity must lie in [0, 1]")
    d = n_total + 1
    t1 = math.sqrt(t)
    r1 = math.sqrt(1.0 - t)
    log_fact = np.cumsum(np.concatenate(([0.0], np.log(np.arange(1, 2 * d)))))
    u = np.zeros((d * d, d * d), dtype=complex)
    for n in range(d):
        for m in range(d):
            col = n * d + m
            for j in range(n + 1):
                for i in range(m + 1):
                    ka = j + m - i
                    kb = n - j + i
                    if ka >= d or kb >= d:
                        continue
                    amp = (
                        math.comb(n, j) * math.comb(m, i)
                        * t1 ** (j + i) * r1 ** (n - j) * (-r1) ** (m - i)
                    )
                    if amp == 0.0:
                        continue
                    amp *= math.exp(0.5 * (log_fact[ka] + log_fact[kb] - log_fact[n] - log_fact[m]))
                    u[ka * d + kb, col] += amp
    return u


def operator_schmidt(m: np.ndarray, d1: int, d2: int, drop_tol: float = DROP_TOL):
    """Split a two-mode operator into sum_k s_k A_k (x) B_k via SVD.

    Returns a list of (s_k, A_k, B_k) with unit-Frobenius-norm factors.
    """
    r = m.reshape(d1, d2, d1, d2).transpose(0, 2, 1, 3).reshape(d1 * d1, d2 * d2)
    u, s, vh = np.linalg.svd(r, full_matrices=False)
    out = []
    for k in range(len(s)):
        if s[k] < drop_tol:
            break
        a = u[:, k].reshape(d1, d1)
        b = vh[k, :].reshape(d2, d2)
        out.append((s[k], a, b))
    return out


def _embed(f: np.ndarray, dim: int) -> np.ndarray:
    """Zero-pad a factor matrix to a larger per-mode dimension."""
    d = f.shape[0]
    if d == dim:
        return f
    if d > dim:
        raise ValueError("cannot embed into a smaller dimension")
    out = np.zeros((dim, dim), dtype=complex)
    out[:d, :d] = f
    return out


# ---------------------------------------------------------------------------
# Multimode term lists
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MultimodeOperator:
    """Weighted sum of per-mode matrix factors over labeled modes.

    ``terms`` is a tuple of (weight, factors) with one factor per mode, in
    the order of ``modes``.  Factors need not be Hermitian; the sum usually
    is.  Per-mode dimensions may differ between modes (but not between terms
    of the same mode).
    """

    modes: tuple[str, ...]
    terms: tuple[tuple[complex, tuple[np.ndarray, ...]], ...]

    def __post_init__(self):
        if len(set(self.modes)) != len(self.modes):
            raise ValueError("duplicate mode labels")
        for _, factors in self.terms:
            if len(factors) != len(self.modes):
                raise ValueError("every term needs exactly one factor per mode")

    def index(self, mode: str) -> int:
        try:
            return self.modes.index(mode)
        except ValueError:
            raise KeyError(f"unknown mode label {mode!r}") from None

    def dims(self) -> tuple[int, ...]:
        if not self.terms:
            return tuple(1 for _ in self.modes)
        return tuple(f.shape[0] for f in self.terms[0][1])

    def map_factor(self, mode: str, func) -> "MultimodeOperator":
        """Apply a linear matrix map to the factor of one mode in every term."""
        i = self.index(mode)
        new_terms = []
        for w, factors in self.terms:
            fs = list(factors)
            fs[i] = func(fs[i])
            new_terms.append((w, tuple(fs)))
        return MultimodeOperator(self.modes, tuple(new_terms))

    def relabeled(self, mapping: dict[str, str]) -> "MultimodeOperator":
        new_modes = tuple(mapping.get(m, m) for m in self.modes)
        return MultimodeOperator(new_modes, self.terms)

    def cleaned(self, drop_tol: float = DROP_TOL) -> "MultimodeOperator":
        """Merge terms with identical factor fingerprints and drop tiny ones."""
        merged: dict = {}
        for w, factors in self.terms:
            wc = complex(w)
            canon = []
            for f in factors:
                nrm = float(np.linalg.norm(f))
                if nrm == 0.0:
                    wc = 0.0
                    break
                g = f / nrm
                pivot = g.flat[int(np.argmax(np.abs(g)))]
                phase = pivot / abs(pivot)
                g = g / phase
                wc *= nrm * phase
                canon.append(g)
            if wc == 0.0 or abs(wc) < drop_tol:
                continue
            key = tuple(g.tobytes() for g in canon)
            if key in merged:
                merged[key] = (merged[key][0] + wc, merged[key][1])
            else:
                merged[key] = (wc, tuple(canon))
        terms = tuple((w, fs) for w, fs in merged.values() if abs(w) >= drop_tol)
        return MultimodeOperator(self.modes, terms)


def single_mode(mode: str, matrix: np.ndarray) -> MultimodeOperator:
    return MultimodeOperator((mode,), (((1.0 + 0j), (np.asarray(matrix, dtype=complex),)),))


def from_dense_pair(mode_a: str, mode_b: str, matrix: np.ndarray, d1: int, d2: int,
                    drop_tol: float = DROP_TOL) -> MultimodeOperator:
    """Build a two-mode term list from a dense joint matrix."""
    terms = tuple(
        (complex(s), (a, b)) for s, a, b in operator_schmidt(matrix, d1, d2, drop_tol)
    )
    return MultimodeOperator((mode_a, mode_b), terms)


def tensor(a: MultimodeOperator, b: MultimodeOperator) -> MultimodeOperator:
    overlap = set(a.modes) & set(b.modes)
    if overlap:
        raise ValueError(f"overlapping mode labels in tensor: {sorted(overlap)}")
    terms = tuple(
        (wa * wb, fa + fb) for wa, fa in a.terms for wb, fb in b.terms
    )
    return MultimodeOperator(a.modes + b.modes, terms)


def trace(state: MultimodeOperator) -> complex:
    total = 0.0 + 0j
    for w, factors in state.terms:
        prod = w
        for f in factors:
            prod *= np.trace(f)
        total += prod
    return complex(total)


def partial_trace(state: MultimodeOperator, modes: Sequence[str]) -> MultimodeOperator:
    """Trace out the given modes; tracing all modes leaves a zero-mode scalar term."""
    idx = [state.index(m) for m in modes]
    keep = [i for i in range(len(state.modes)) if i not in idx]
    new_modes = tuple(state.modes[i] for i in keep)
    new_terms = []
    for w, factors in state.terms:
        scal = w
        for i in idx:
            scal *= np.trace(factors[i])
        new_terms.append((scal, tuple(factors[i] for i in keep)))
    return MultimodeOperator(new_modes, tuple(new_terms)).cleaned()


def project_out(state: MultimodeOperator,
                measurement: Iterable[tuple[complex, dict[str, np.ndarray]]]) -> MultimodeOperator:
    """Contract some modes against a measurement operator and remove them.

    ``measurement`` is a sum of mode-local products: a list of
    (coefficient, {mode: matrix}).  The returned operator equals
    tr_measured(state . M) and keeps the remaining modes unnormalized.
    """
    measurement = list(measurement)
    meas_modes = set(measurement[0][1])
    idx = [state.index(m) for m in meas_modes]
    keep = [i for i in range(len(state.modes)) if i not in idx]
    new_modes = tuple(state.modes[i] for i in keep)
    new_terms = []
    for w, factors in state.terms:
        scal = 0.0 + 0j
        for coef, ops in measurement:
            prod = coef
            for m, op in ops.items():
                f = factors[state.index(m)]
                d = min(f.shape[0], op.shape[0])
                prod *= np.trace(f[:d, :d] @ op[:d, :d])
            scal += prod
        new_terms.append((w * scal, tuple(factors[i] for i in keep)))
    return MultimodeOperator(new_modes, tuple(new_terms)).cleaned()


# ---------------------------------------------------------------------------
# Channels
# ---------------------------------------------------------------------------

def apply_loss(state: MultimodeOperator, mode: str, eta: float) -> MultimodeOperator:
    """Pure-loss channel: beam splitter of transmissivity eta against a
    traced-out vacuum ancilla, in Kraus form."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError("loss transmissivity must lie in [0, 1]")
    i = state.index(mode)
    dim = state.dims()[i]
    kraus = _loss_kraus(dim, eta)

    def channel(f: np.ndarray) -> np.ndarray:
        return sum(k @ f @ k.conj().T for k in kraus)

    return state.map_factor(mode, channel).cleaned()


def apply_beam_splitter(state: MultimodeOperator, mode_a: str, mode_b: str,
                        t: float, drop_tol: float = DROP_TOL) -> MultimodeOperator:
    """Two-mode beam splitter with the module-level sign convention.

    Photon number is conserved; both output factors are expanded to the
    pair's total-photon-number dimension so no population is lost.
    """
    ia, ib = state.index(mode_a), state.index(mode_b)
    dims = state.dims()
    n_total = (dims[ia] - 1) + (dims[ib] - 1)
    d = n_total + 1
    u = beam_splitter_unitary(n_total, t)
    new_terms = []
    for w, factors in state.terms:
        fa = _embed(factors[ia], d)
        fb = _embed(factors[ib], d)
        joint = u @ np.kron(fa, fb) @ u.conj().T
        others_norm = 1.0
        for j, f in enumerate(factors):
            if j not in (ia, ib):
                others_norm *= float(np.linalg.norm(f))
        local_tol = drop_tol / max(abs(w) * others_norm, drop_tol)
        for s, a, b in operator_schmidt(joint, d, d, drop_tol=min(local_tol, 1.0)):
            fs = list(factors)
            fs[ia] = a
            fs[ib] = b
            new_terms.append((w * s, tuple(fs)))
    return MultimodeOperator(state.modes, tuple(new_terms)).cleaned(drop_tol)


def densify(state: MultimodeOperator) -> np.ndarray:
    """Dense joint matrix; intended for states on a few modes only."""
    dims = state.dims()
    total = int(np.prod(dims))
    if total > 4096:
        raise ValueError("densify is limited to small joint dimensions")
    out = np.zeros((total, total), dtype=complex)
    for w, factors in state.terms:
        joint = np.array([[w]], dtype=complex)
        for f in factors:
            joint = np.kron(joint, f)
        out += joint
    return out


def trim(state: MultimodeOperator, dims: Sequence[int], tol: float = 1e-12) -> MultimodeOperator:
    """Crop every factor to the given per-mode dimensions.

    Raises TruncationError if any term holds more than ``tol`` weight in the
    cropped entries.
    """
    new_terms = []
    for w, factors in state.terms:
        fs = []
        for f, d in zip(factors, dims):
            if f.shape[0] > d:
                lost = float(np.linalg.norm(f)) ** 2 - float(np.linalg.norm(f[:d, :d])) ** 2
                if abs(w) * math.sqrt(max(lost, 0.0)) > tol:
                    raise TruncationError("trim would discard non-negligible population")
                f = f[:d, :d]
            fs.append(f)
        new_terms.append((w, tuple(fs)))
    return MultimodeOperator(state.modes, tuple(new_terms)).cleaned()
