"""Random product bases, projective single-shot sampling, and the shot dataset.

A measurement basis is a list of per-site directions (theta, phi); measuring
in it yields one magnetic number m per site.  Outcomes are stored internally
as indices p = S - m (p = 0 is m = +S); the public Shot type carries the
physical m values.

Sampling from a matrix product state is autoregressive: with the state
right-canonicalized, the rotated site tensors stay right-isometric, so the
conditional distribution of each site's outcome given the ones already drawn
is the squared norm of a small environment vector.  No enumeration of the
outcome space and no rejection is involved, and every shot costs
O(N q^2 D^2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateStateError, FormatError, ParameterError
from .rotations import rotation_matrices

# re-exported here because rotations are part of the measurement surface
from .rotations import rotation_matrix, wigner_d, wigner_d_matrix  # noqa: F401

_MASS_FLOOR = 1e-14


@dataclass(frozen=True)
class MeasurementBasis:
    """Per-site measurement directions (theta in [0, pi], phi in [0, 2 pi))."""

    thetas: np.ndarray
    phis: np.ndarray

    def __post_init__(self):
        thetas = np.asarray(self.thetas, dtype=float)
        phis = np.asarray(self.phis, dtype=float)
        if thetas.ndim != 1 or thetas.shape != phis.shape:
            raise ParameterError("thetas and phis must be 1-d arrays of equal length")
        if np.any(thetas < 0) or np.any(thetas > np.pi):
            raise ParameterError("theta out of [0, pi]")
        if np.any(phis < 0) or np.any(phis >= 2 * np.pi):
            raise ParameterError("phi out of [0, 2 pi)")
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "phis", phis)

    @property
    def n_sites(self) -> int:
        return len(self.thetas)

    @classmethod
    def all_z(cls, n_sites) -> "MeasurementBasis":
        return cls(np.zeros(n_sites), np.zeros(n_sites))


@dataclass(frozen=True)
class Shot:
    """One basis and one outcome string of magnetic numbers m."""

    basis: MeasurementBasis
    outcomes: np.ndarray

    def __post_init__(self):
        outcomes = np.asarray(self.outcomes, dtype=float)
        if outcomes.shape != (self.basis.n_sites,):
            raise ParameterError("outcome string length must match the basis")
        object.__setattr__(self, "outcomes", outcomes)


class Dataset:
    """Append-only collection of shots, stored as flat angle/outcome arrays."""

    def __init__(self, n_sites, local_dim):
        if n_sites < 1 or local_dim < 2:
            raise ParameterError("need n_sites >= 1 and local_dim >= 2")
        self.n_sites = int(n_sites)
        self.local_dim = int(local_dim)
        self._chunks = []  # list of (thetas, phis, idx) blocks
        self._cache = None

    @property
    def spin(self) -> float:
        return (self.local_dim - 1) / 2.0

    @property
    def replica_count(self) -> int:
        return sum(c[0].shape[0] for c in self._chunks)

    def __len__(self) -> int:
        return self.replica_count

    def _consolidated(self):
        if self._cache is None:
            if not self._chunks:
                z = np.zeros((0, self.n_sites))
                self._cache = (z, z.copy(), z.astype(np.int64))
            else:
                self._cache = tuple(
                    np.concatenate([c[i] for c in self._chunks]) for i in range(3)
                )
        return self._cache

    @property
    def thetas(self) -> np.ndarray:
        return self._consolidated()[0]

    @property
    def phis(self) -> np.ndarray:
        return self._consolidated()[1]

    @property
    def outcome_indices(self) -> np.ndarray:
        """Outcomes as indices p = S - m, shape (|V|, N)."""
        return self._consolidated()[2]

    def append(self, shot: Shot) -> None:
        if shot.basis.n_sites != self.n_sites:
            raise ParameterError("shot length does not match dataset")
        idx = np.rint(self.spin - shot.outcomes).astype(np.int64)
        if np.any(idx < 0) or np.any(idx >= self.local_dim):
            raise ParameterError("outcome out of range for this dataset")
        self.extend_raw(
            shot.basis.thetas[None, :], shot.basis.phis[None, :], idx[None, :]
        )

    def extend_raw(self, thetas, phis, idx) -> None:
        thetas = np.asarray(thetas, dtype=float)
        phis = np.asarray(phis, dtype=float)
        idx = np.asarray(idx, dtype=np.int64)
        if thetas.shape != phis.shape or thetas.shape != idx.shape:
            raise ParameterError("mismatched shot arrays")
        if thetas.ndim != 2 or thetas.shape[1] != self.n_sites:
            raise ParameterError("shot arrays must have shape (count, n_sites)")
        self._chunks.append((thetas, phis, idx))
        self._cache = None

    def extend(self, other: "Dataset") -> None:
        if other.n_sites != self.n_sites or other.local_dim != self.local_dim:
            raise ParameterError("datasets are incompatible")
        for c in other._chunks:
            self._chunks.append(c)
        self._cache = None

    def shot(self, i) -> Shot:
        thetas, phis, idx = self._consolidated()
        return Shot(
            MeasurementBasis(thetas[i], phis[i]), self.spin - idx[i].astype(float)
        )

    # one line per shot; per-site fields "theta,phi,2m" joined by semicolons
    def to_file(self, path) -> None:
        thetas, phis, idx = self._consolidated()
        twice_m = (self.local_dim - 1) - 2 * idx
        with open(path, "w") as f:
            for s in range(len(self)):
                fields = (
                    f"{float(thetas[s, j])!r},{float(phis[s, j])!r},{twice_m[s, j]:d}"
                    for j in range(self.n_sites)
                )
                f.write(";".join(fields) + "\n")

    @classmethod
    def from_file(cls, path, local_dim) -> "Dataset":
        rows = []
        with open(path) as f:
            for ln, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    triples = [fld.split(",") for fld in line.split(";")]
                    th = [float(t[0]) for t in triples]
                    ph = [float(t[1]) for t in triples]
                    tm = [int(t[2]) for t in triples]
                except (ValueError, IndexError) as exc:
                    raise FormatError(f"{path}: line {ln}: {exc}") from exc
                rows.append((th, ph, tm))
        if not rows:
            raise FormatError(f"{path}: no shots")
        n_sites = len(rows[0][0])
        ds = cls(n_sites, local_dim)
        thetas = np.array([r[0] for r in rows])
        phis = np.array([r[1] for r in rows])
        idx = ((local_dim - 1) - np.array([r[2] for r in rows])) // 2
        if np.any(idx < 0) or np.any(idx >= local_dim):
            raise FormatError(f"{path}: outcome out of range for q={local_dim}")
        ds.extend_raw(thetas, phis, idx)
        return ds


# -- basis sampling ----------------------------------------------------------


def sample_bases(count, n_sites, rng) -> tuple[np.ndarray, np.ndarray]:
    """Angles of ``count`` i.i.d. uniform product bases, shape (count, N) each.

    Directions are uniform on the sphere: cos(theta) ~ U[-1, 1] and
    phi ~ U[0, 2 pi), independently per site.
    """
    cos_t = rng.uniform(-1.0, 1.0, size=(count, n_sites))
    thetas = np.arccos(cos_t)
    phis = rng.uniform(0.0, 2.0 * np.pi, size=(count, n_sites))
    return thetas, phis


def sample_basis(n_sites, rng) -> MeasurementBasis:
    thetas, phis = sample_bases(1, n_sites, rng)
    return MeasurementBasis(thetas[0], phis[0])


def fixed_bases(n_sites, local_dim=2) -> list[MeasurementBasis]:
    """The 2N+1 fixed product bases: all-z, then z with site k rotated to x,
    then z with site k rotated to y.  Qubits only."""
    if local_dim != 2:
        raise ParameterError("fixed basis set is defined for qubits (q = 2) only")
    bases = [MeasurementBasis.all_z(n_sites)]
    for phi in (0.0, np.pi / 2.0):
        for k in range(n_sites):
            thetas = np.zeros(n_sites)
            phis = np.zeros(n_sites)
            thetas[k] = np.pi / 2.0
            phis[k] = phi
            bases.append(MeasurementBasis(thetas, phis))
    return bases


# -- projective sampling -------------------------------------------------------


def _broadcast_angles(basis, count, n_sites):
    if isinstance(basis, MeasurementBasis):
        if basis.n_sites != n_sites:
            raise ParameterError("basis length does not match the state")
        thetas = np.broadcast_to(basis.thetas, (count, n_sites))
        phis = np.broadcast_to(basis.phis, (count, n_sites))
        return thetas, phis
    thetas, phis = basis
    thetas = np.asarray(thetas, dtype=float)
    phis = np.asarray(phis, dtype=float)
    if thetas.shape != (count, n_sites) or phis.shape != (count, n_sites):
        raise ParameterError("per-shot angles must have shape (count, n_sites)")
    return thetas, phis


def _site_unitaries(basis, thetas, phis, spin):
    """One (q, q) matrix per site for a shared basis, else (count, q, q) stacks."""
    if isinstance(basis, MeasurementBasis):
        return [
            rotation_matrices(basis.thetas[j], basis.phis[j], spin)
            for j in range(basis.n_sites)
        ]
    return [
        rotation_matrices(thetas[:, j], phis[:, j], spin)
        for j in range(thetas.shape[1])
    ]


def _sample_outcome_indices(target, unitaries, count, rng) -> np.ndarray:
    mps = target.canonicalize(0)
    n = mps.n_sites
    left = np.ones((count, 1), dtype=np.complex128)
    out = np.empty((count, n), dtype=np.int64)
    rows = np.arange(count)
    for j in range(n):
        a = mps.tensor(j)
        d1, q, d2 = a.shape
        t = (left @ a.reshape(d1, q * d2)).reshape(count, q, d2)
        u = unitaries[j]
        if u.ndim == 2:
            cand = np.swapaxes(np.tensordot(t, u, axes=(1, 1)), 1, 2)
        else:
            cand = np.einsum("smv,svj->smj", u, t)  # (count, q, D2)
        w = (cand.real**2 + cand.imag**2).sum(axis=2)
        total = w.sum(axis=1)
        if np.any(total < _MASS_FLOOR):
            raise DegenerateStateError(
                "conditional outcome mass vanished during sampling"
            )
        cum = np.cumsum(w, axis=1)
        r = rng.random(count) * total
        choice = (cum > r[:, None]).argmax(axis=1)
        out[:, j] = choice
        left = cand[rows, choice, :]
        left /= np.linalg.norm(left, axis=1, keepdims=True)
    return out


def draw_shots(target, basis, count, rng) -> Dataset:
    """Sample ``count`` independent shots with outcome probability equal to the
    squared rotated amplitude.  ``basis`` is a single MeasurementBasis applied
    to every shot, or a (thetas, phis) pair of (count, N) arrays."""
    n = target.n_sites
    thetas, phis = _broadcast_angles(basis, count, n)
    unitaries = _site_unitaries(basis, thetas, phis, target.spin)
    idx = _sample_outcome_indices(target, unitaries, count, rng)
    ds = Dataset(n, target.local_dim)
    ds.extend_raw(np.array(thetas), np.array(phis), idx)
    return ds


def draw_shot(target, basis, rng) -> Shot:
    return draw_shots(target, basis, 1, rng).shot(0)


def draw_noisy_shots(target, basis, count, epsilon, rng) -> Dataset:
    """Depolarized sampling: with probability epsilon a shot's outcomes are
    replaced by a uniformly random string, otherwise it follows the state."""
    if not 0.0 <= epsilon <= 1.0:
        raise ParameterError("epsilon must lie in [0, 1]")
    if epsilon == 0.0:
        return draw_shots(target, basis, count, rng)
    n, q = target.n_sites, target.local_dim
    thetas, phis = _broadcast_angles(basis, count, n)
    unitaries = _site_unitaries(basis, thetas, phis, target.spin)
    noisy = rng.random(count) < epsilon
    idx = _sample_outcome_indices(target, unitaries, count, rng)
    n_noisy = int(noisy.sum())
    if n_noisy:
        idx[noisy] = rng.integers(0, q, size=(n_noisy, n))
    ds = Dataset(n, q)
    ds.extend_raw(np.array(thetas), np.array(phis), idx)
    return ds


def draw_noisy_shot(target, basis, epsilon, rng) -> Shot:
    return draw_noisy_shots(target, basis, 1, epsilon, rng).shot(0)


def measure_batch(target, count, epsilon, rng) -> Dataset:
    """One accumulation step of the scheme: ``count`` shots, each in a fresh
    uniformly random product basis, with depolarizing noise ``epsilon``."""
    bases = sample_bases(count, target.n_sites, rng)
    return draw_noisy_shots(target, bases, count, epsilon, rng)
