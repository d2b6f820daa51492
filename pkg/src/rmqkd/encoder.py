"""Dual-rail phase-encoded BB84 states for both user source types.

Each user carries a qubit on two optical rails (r/s for Alice, u/v for Bob).
In the z basis the source fires into the bit-selected rail; in the x basis
the source is split 50:50 across the rails with a relative phase of 0
(bit 0) or pi (bit 1).  Bit 0 occupies the first rail (r or u).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .components import Numerics, ParameterError, SystemParams
from .fock import (
    FockCutoff,
    MultimodeOperator,
    coherent_state,
    from_dense_pair,
    number_state,
    single_mode,
    tensor,
)

SOURCE_KINDS = ("single", "double", "sps", "coherent")


@dataclass(frozen=True)
class EncodedState:
    """Joint encoder output of both users over modes (r, s, u, v)."""

    basis: str
    bits: tuple[int, int]
    state: MultimodeOperator
    source_kind: str


def _check_args(basis: str, bit: int, source_kind: str):
    if basis not in ("z", "x"):
        raise ParameterError(f"basis must be 'z' or 'x', got {basis!r}")
    if bit not in (0, 1):
        raise ParameterError("bits must be 0 or 1")
    if source_kind not in SOURCE_KINDS:
        raise ParameterError(f"source kind must be one of {SOURCE_KINDS}")


def _split_fock_vector(n_photons: int, phase: float, dim: int) -> np.ndarray:
    """Ket of an n-photon pulse split 50:50 across two rails, exactly:
    (a_dag)^n -> ((r_dag + e^{i phase} s_dag)/sqrt(2))^n acting on vacuum."""
    vec = np.zeros(dim * dim, dtype=complex)
    for k in range(n_photons + 1):
        n_r = n_photons - k
        amp = (
            math.comb(n_photons, k) * np.exp(1j * phase * k)
            / math.sqrt(2.0) ** n_photons
            * math.sqrt(math.factorial(n_r) * math.factorial(k))
            / math.sqrt(math.factorial(n_photons))
        )
        vec[n_r * dim + k] = amp
    return vec


def _rails(rail_a: str, rail_b: str, basis: str, bit: int, source_kind: str,
           mean_photons: float, params: SystemParams, numerics: Numerics) -> MultimodeOperator:
    """Two-rail encoded state of one user."""
    if source_kind == "coherent":
        # The random global phase is shared by the user's two rails, so the
        # mixture is built jointly here rather than per rail.
        cutoff = numerics.coherent_cutoff(mean_photons)
        terms = []
        k = numerics.phase_samples
        alpha = math.sqrt(mean_photons)
        for j in range(k):
            a_j = alpha * np.exp(2j * math.pi * j / k)
            if basis == "z":
                occupied = coherent_state(a_j, cutoff, numerics.leakage_tol)
                vac = number_state(0, cutoff)
                pair = (occupied, vac) if bit == 0 else (vac, occupied)
            else:
                phase = 0.0 if bit == 0 else math.pi
                half = a_j / math.sqrt(2.0)
                pair = (coherent_state(half, cutoff, numerics.leakage_tol),
                        coherent_state(half * np.exp(1j * phase), cutoff, numerics.leakage_tol))
            terms.append((1.0 / k + 0j, pair))
        return MultimodeOperator((rail_a, rail_b), tuple(terms)).cleaned()

    dim = numerics.mem_dim
    cutoff = FockCutoff(dim - 1)
    if source_kind == "single":
        weights = {1: 1.0}
    elif source_kind == "double":
        weights = {2: 1.0}
    else:
        weights = {1: 1.0 - params.p, 2: params.p}
    if basis == "z":
        src = sum(w * number_state(n_ph, cutoff) for n_ph, w in weights.items())
        vac = number_state(0, cutoff)
        state = tensor(single_mode(rail_a, src if bit == 0 else vac),
                       single_mode(rail_b, vac if bit == 0 else src))
        return state
    phase = 0.0 if bit == 0 else math.pi
    dense = np.zeros((dim * dim, dim * dim), dtype=complex)
    for n_ph, w in weights.items():
        vec = _split_fock_vector(n_ph, phase, dim)
        dense += w * np.outer(vec, vec.conj())
    return from_dense_pair(rail_a, rail_b, dense, dim, dim)


def encode(basis: str, m: int, n: int, source_kind: str, params: SystemParams,
           numerics: Numerics = Numerics()) -> EncodedState:
    """Joint encoder output for Alice's bit m and Bob's bit n."""
    _check_args(basis, m, source_kind)
    _check_args(basis, n, source_kind)
    alice = _rails("r", "s", basis, m, source_kind, params.mu, params, numerics)
    bob = _rails("u", "v", basis, n, source_kind, params.nu, params, numerics)
    return EncodedState(basis, (m, n), tensor(alice, bob), source_kind)


def alice_rails(basis: str, bit: int, source_kind: str, params: SystemParams,
                numerics: Numerics = Numerics()) -> MultimodeOperator:
    _check_args(basis, bit, source_kind)
    return _rails("r", "s", basis, bit, source_kind, params.mu, params, numerics)


def bob_rails(basis: str, bit: int, source_kind: str, params: SystemParams,
              numerics: Numerics = Numerics()) -> MultimodeOperator:
    _check_args(basis, bit, source_kind)
    return _rails("u", "v", basis, bit, source_kind, params.nu, params, numerics)
