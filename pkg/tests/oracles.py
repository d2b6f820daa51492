"""Dense-matrix reference implementations used as independent oracles.

Everything here works on full joint density matrices with scipy's matrix
exponential for the beam splitter, deliberately avoiding the term-list
machinery under test.
"""

import math

import numpy as np
from scipy.linalg import expm


def annihilation(dim):
    a = np.zeros((dim, dim), dtype=complex)
    for n in range(1, dim):
        a[n - 1, n] = math.sqrt(n)
    return a


def loss_kraus(dim, eta):
    ops = []
    for j in range(dim):
        k = np.zeros((dim, dim), dtype=complex)
        for n in range(j, dim):
            k[n - j, n] = math.sqrt(math.comb(n, j) * eta ** (n - j) * (1.0 - eta) ** j)
        ops.append(k)
    return ops


class DenseSim:
    """Joint density matrix over named modes with per-mode dimensions."""

    def __init__(self, modes, dims, factors):
        self.modes = list(modes)
        self.dims = list(dims)
        rho = np.array([[1.0 + 0j]])
        for f in factors:
            rho = np.kron(rho, f)
        self.rho = rho

    def _embed(self, op, mode):
        full = np.array([[1.0 + 0j]])
        for m, d in zip(self.modes, self.dims):
            full = np.kron(full, op if m == mode else np.eye(d, dtype=complex))
        return full

    def _embed_pair(self, op_pair, mode_a, mode_b):
        """Embed a two-mode operator given on (mode_a, mode_b) ordering."""
        ia, ib = self.modes.index(mode_a), self.modes.index(mode_b)
        da, db = self.dims[ia], self.dims[ib]
        perm_modes = [m for m in self.modes if m not in (mode_a, mode_b)]
        # act by permuting target modes to the front, applying, permuting back
        order = [ia, ib] + [i for i in range(len(self.modes)) if i not in (ia, ib)]
        dims = np.array(self.dims)
        total = int(dims.prod())
        idx = np.arange(total).reshape(self.dims).transpose(order).reshape(-1)
        inv = np.empty_like(idx)
        inv[idx] = np.arange(total)
        rest = total // (da * db)
        big = np.kron(op_pair, np.eye(rest, dtype=complex))
        return big[np.ix_(inv, inv)]

    def apply_beam_splitter(self, mode_a, mode_b, t):
        ia, ib = self.modes.index(mode_a), self.modes.index(mode_b)
        da, db = self.dims[ia], self.dims[ib]
        a = np.kron(annihilation(da), np.eye(db))
        b = np.kron(np.eye(da), annihilation(db))
        phi = math.acos(math.sqrt(t))
        u = expm(phi * (a @ b.conj().T - a.conj().T @ b))
        big = self._embed_pair(u, mode_a, mode_b)
        self.rho = big @ self.rho @ big.conj().T

    def apply_loss(self, mode, eta):
        i = self.modes.index(mode)
        out = np.zeros_like(self.rho)
        for k in loss_kraus(self.dims[i], eta):
            big = self._embed(k, mode)
            out += big @ self.rho @ big.conj().T
        self.rho = out

    def expect(self, op_by_mode):
        full = np.array([[1.0 + 0j]])
        for m, d in zip(self.modes, self.dims):
            full = np.kron(full, op_by_mode.get(m, np.eye(d, dtype=complex)))
        return complex(np.trace(self.rho @ full))

    def project_and_remove(self, op_by_mode, keep):
        """Apply a (not necessarily unitary) product operator, then partial
        trace onto the kept modes."""
        full = np.array([[1.0 + 0j]])
        for m, d in zip(self.modes, self.dims):
            full = np.kron(full, op_by_mode.get(m, np.eye(d, dtype=complex)))
        rho = self.rho @ full
        shape = self.dims + self.dims
        t = rho.reshape(shape)
        nm = len(self.modes)
        for m in sorted((m for m in self.modes if m not in keep),
                        key=lambda m: -self.modes.index(m)):
            i = self.modes.index(m)
            t = np.trace(t, axis1=i, axis2=i + nm)
            nm -= 1
            self.modes.pop(i)
            self.dims.pop(i)
        self.rho = t.reshape(int(np.prod(self.dims)), int(np.prod(self.dims)))


def threshold_click_ops(dim, d_c):
    """Click / no-click single-mode POVM pieces for one threshold detector."""
    p0 = np.zeros((dim, dim), dtype=complex)
    p0[0, 0] = 1.0
    eye = np.eye(dim, dtype=complex)
    return {"fires": eye - p0 + d_c * p0, "silent": (1.0 - d_c) * p0}


def parity(dim):
    return np.diag((-1.0 + 0j) ** np.arange(dim))


def elementary_link_dense(p, eta_w, eta_d, d_c, l_att, eta_sps, L0):
    """Dense counterpart of the production elementary link."""
    src = np.zeros((5, 5), dtype=complex)
    src[1, 1] = 1.0 - p
    src[2, 2] = p
    vac3 = np.zeros((3, 3), dtype=complex)
    vac3[0, 0] = 1.0
    sim = DenseSim(["chA", "memA", "chB", "memB"], [5, 3, 5, 3],
                   [src, vac3, src, vac3])
    eta_ch = math.exp(-L0 / 2.0 / l_att) * eta_d
    for side in ("A", "B"):
        sim.apply_beam_splitter(f"ch{side}", f"mem{side}", eta_sps)
        sim.apply_loss(f"mem{side}", eta_w)
        sim.apply_loss(f"ch{side}", eta_ch)
    sim.apply_beam_splitter("chA", "chB", 0.5)
    return _herald_dense(sim, "chA", "chB", "memA", d_c, keep=("memA", "memB"))


def swap_dense(rho_left, rho_right, eta_r, eta_d, d_c):
    """Dense counterpart of the production swap.

    Inputs are 9x9 two-memory states (3 levels per mode); the inner modes are
    embedded into 5 levels so photon bunching at the splitter is kept exactly.
    """
    embed = np.zeros((15, 9))
    for a in range(3):
        for b in range(3):
            embed[a * 5 + b, a * 3 + b] = 1.0
    left = embed @ rho_left @ embed.T    # (A:3, iL:5)
    right = np.zeros((15, 15), dtype=complex)
    right[:9, :9] = rho_right            # (iR:5, B:3); iR < 3 keeps the same flat layout
    sim = DenseSim(["A", "iL", "iR", "B"], [3, 5, 5, 3], [np.eye(1)])
    sim.rho = np.kron(left, right)
    eta_read = eta_r * eta_d
    sim.apply_loss("iL", eta_read)
    sim.apply_loss("iR", eta_read)
    sim.apply_beam_splitter("iL", "iR", 0.5)
    return _herald_dense(sim, "iL", "iR", "A", d_c, keep=("A", "B"))


def _herald_dense(sim, det_first, det_second, left_memory, d_c, keep):
    results = []
    for clicked, silent, correct in ((det_first, det_second, True),
                                     (det_second, det_first, False)):
        branch = DenseSim(list(sim.modes), list(sim.dims), [np.eye(1)])
        branch.rho = sim.rho.copy()
        ops_c = threshold_click_ops(branch.dims[branch.modes.index(clicked)], d_c)
        ops_s = threshold_click_ops(branch.dims[branch.modes.index(silent)], d_c)
        branch.project_and_remove({clicked: ops_c["fires"], silent: ops_s["silent"]},
                                  keep=keep)
        if correct:
            par = branch._embed(parity(branch.dims[branch.modes.index(left_memory)]),
                                left_memory)
            branch.rho = par @ branch.rho @ par
        results.append(branch)
    p1 = np.trace(results[0].rho).real
    p2 = np.trace(results[1].rho).real
    rho = (results[0].rho + results[1].rho) / (p1 + p2)
    return p1 + p2, rho
