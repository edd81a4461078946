"""Likelihood training of a complex MPS on rotated single-shot data.

The cost at a bond is the mean negative log of the normalized squared
rotated amplitude plus an entanglement penalty,

    L(M) = -(1/|V|) sum_shots ln(|amp|^2 / |M|^2) + lam * S2(M),

where M is the merged two-site tensor, |M|^2 its squared Frobenius norm
(the state norm in canonical gauge), and S2 the second Renyi entropy of
the normalized Schmidt spectrum across the merged bond.  Keeping the norm
explicit makes L scale-invariant, so the merged tensor may wander off the
unit sphere between gradient steps without biasing the objective.

Gradients are taken with respect to the conjugated merged tensor; for a
real loss the ascent direction of -L is exactly that Wirtinger derivative.
Per shot the environment factorizes into a left vector, the two rotated
outcome rows, and a right vector, so amplitudes and gradient sums reduce
to one complex matmul each over the dataset.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateStateError, ParameterError
from .mps import MatrixProductState, TwoSiteTensor, split_two_site
from .rotations import rotation_matrices


@dataclass
class TrainConfig:
    """Optimizer hyperparameters for the two-site sweeps.

    ``eta`` is the fixed relative SVD truncation floor.  When ``eta_noise``
    is positive, each bond additionally prunes singular values below
    eta_noise * sqrt((D1 q + q D2) / (2 |V|)), capped at ``eta_cap``: the
    statistical magnitude that pure sampling noise induces on the merged
    tensor's singular values.  This is what lets the bond dimensions settle
    at the target's rank instead of absorbing shot noise; set eta_noise = 0
    to truncate at the fixed floor only.
    """

    lambda0: float = 0.01
    lambda_decay: float = 0.9
    step_size: float = 0.05
    step_backoff: float = 0.5
    grad_steps_per_bond: int = 10
    sweeps_per_stage: int = 20
    d_cap: int = 32
    eta: float = 1e-7
    psi_floor: float = 1e-12
    convergence_tol: float = 1e-4
    eta_noise: float = 0.0
    eta_cap: float = 0.12

    def validate(self) -> None:
        if self.lambda0 < 0 or not np.isfinite(self.lambda0):
            raise ParameterError("lambda0 must be finite and >= 0")
        if not 0.0 < self.lambda_decay < 1.0:
            raise ParameterError("lambda_decay must lie in (0, 1)")
        if self.step_size < 0:
            raise ParameterError("step_size must be >= 0")
        if not 0.0 < self.step_backoff < 1.0:
            raise ParameterError("step_backoff must lie in (0, 1)")
        if self.grad_steps_per_bond < 0 or self.sweeps_per_stage < 1:
            raise ParameterError("need grad_steps_per_bond >= 0, sweeps_per_stage >= 1")
        if self.d_cap < 1 or self.eta < 0:
            raise ParameterError("need d_cap >= 1 and eta >= 0")
        if not 0.0 < self.psi_floor <= 1e-8:
            raise ParameterError("psi_floor must lie in (0, 1e-8]")
        if self.convergence_tol <= 0:
            raise ParameterError("convergence_tol must be > 0")
        if self.eta_noise < 0 or not 0.0 < self.eta_cap <= 1.0:
            raise ParameterError("need eta_noise >= 0 and eta_cap in (0, 1]")

    def bond_eta(self, d1, q, d2, n_shots) -> float:
        """Effective truncation threshold at one bond for ``n_shots`` samples."""
        if self.eta_noise == 0.0:
            return self.eta
        noise = self.eta_noise * np.sqrt((d1 * q + q * d2) / (2.0 * n_shots))
        return max(self.eta, min(self.eta_cap, noise))


@dataclass
class LossReport:
    """Cost breakdown at one penalty weight; total = nll + lam * penalty."""

    nll: float
    penalty: float
    total: float
    lam: float

    @classmethod
    def build(cls, nll, penalty, lam) -> "LossReport":
        return cls(float(nll), float(penalty), float(nll + lam * penalty), float(lam))


def _site_rows(dataset, spin):
    """Per-site (|V|, q) arrays: the rotation row selected by each outcome."""
    thetas, phis = dataset.thetas, dataset.phis
    idx = dataset.outcome_indices
    count = thetas.shape[0]
    rows = []
    sel = np.arange(count)
    for j in range(dataset.n_sites):
        u = rotation_matrices(thetas[:, j], phis[:, j], spin)
        rows.append(np.ascontiguousarray(u[sel, idx[:, j], :]))
    return rows


def _contract_left(left, tensor, row):
    t = np.einsum("si,ivj->svj", left, tensor)
    return np.einsum("svj,sv->sj", t, row)


def _contract_right(tensor, row, right):
    t = np.einsum("ivj,sj->siv", tensor, right)
    return np.einsum("siv,sv->si", t, row)


def _check_dataset(mps, dataset):
    if len(dataset) == 0:
        raise ParameterError("dataset is empty")
    if dataset.n_sites != mps.n_sites or dataset.local_dim != mps.local_dim:
        raise ParameterError("dataset does not match the state's shape")


def nll(mps, dataset, psi_floor=1e-12) -> float:
    """Mean negative log of the squared rotated amplitudes over the dataset,
    with |amp|^2 clamped below at psi_floor.  The state must be normalized."""
    _check_dataset(mps, dataset)
    rows = _site_rows(dataset, mps.spin)
    left = np.ones((len(dataset), 1), dtype=np.complex128)
    for j in range(mps.n_sites):
        left = _contract_left(left, mps.tensor(j), rows[j])
    probs = np.abs(left[:, 0]) ** 2
    return float(-np.mean(np.log(np.maximum(probs, psi_floor))))


def loss_with_penalty(mps, dataset, bond, lam, psi_floor=1e-12) -> LossReport:
    """NLL plus lam times the Renyi-2 entropy across ``bond``."""
    return LossReport.build(
        nll(mps, dataset, psi_floor), mps.renyi2_entropy(bond), lam
    )


class BondObjective:
    """The training objective restricted to one merged two-site tensor.

    Environments (everything outside the merged pair, rotated and contracted
    with the shot outcomes) are frozen at construction; ``loss`` and
    ``gradient`` may then be evaluated for arbitrary merged tensors of the
    matching shape.  ``gradient`` returns the ascent direction of -loss with
    respect to the conjugated tensor.  Shots whose normalized probability
    falls below ``psi_floor`` contribute the clamped constant to the loss and
    nothing to the gradient; ``clamped_last`` tallies them per evaluation.
    """

    def __init__(self, mps, bond, dataset, penalty_weight, psi_floor=1e-12):
        _check_dataset(mps, dataset)
        if not 0 <= bond <= mps.n_sites - 2:
            raise ParameterError(f"bond {bond} out of range")
        if mps.canonical_center not in (bond, bond + 1):
            mps = mps.canonicalize(bond)
        rows = _site_rows(dataset, mps.spin)
        count = len(dataset)
        left = np.ones((count, 1), dtype=np.complex128)
        for j in range(bond):
            left = _contract_left(left, mps.tensor(j), rows[j])
        right = np.ones((count, 1), dtype=np.complex128)
        for j in range(mps.n_sites - 1, bond + 1, -1):
            right = _contract_right(mps.tensor(j), rows[j], right)
        self._init_from_parts(
            left, rows[bond], rows[bond + 1], right, penalty_weight, psi_floor
        )

    @classmethod
    def from_environments(cls, left, row_a, row_b, right, penalty_weight, psi_floor):
        obj = cls.__new__(cls)
        obj._init_from_parts(left, row_a, row_b, right, penalty_weight, psi_floor)
        return obj

    def _init_from_parts(self, left, row_a, row_b, right, penalty_weight, psi_floor):
        count, d1 = left.shape
        q = row_a.shape[1]
        d2 = right.shape[1]
        self.count = count
        self.shape = (d1, q, q, d2)
        self.penalty_weight = float(penalty_weight)
        self.psi_floor = float(psi_floor)
        # rank-1 shot environments, flattened for single-matmul evaluation
        self._la = (left[:, :, None] * row_a[:, None, :]).reshape(count, d1 * q)
        self._rb = (row_b[:, :, None] * right[:, None, :]).reshape(count, q * d2)
        self._la_c = self._la.conj()
        self._rb_c = self._rb.conj()
        self.clamped_last = 0

    def amplitudes(self, merged) -> np.ndarray:
        d1, q, _, d2 = self.shape
        m2 = merged.reshape(d1 * q, q * d2)
        return np.einsum("sy,sy->s", self._la @ m2, self._rb)

    def _norm_sq(self, merged) -> float:
        n2 = float(np.vdot(merged, merged).real)
        if n2 <= 0 or not np.isfinite(n2):
            raise DegenerateStateError("merged tensor has zero norm")
        return n2

    def _purity(self, merged):
        """Tr[(Theta Theta^dag)^2] of the raw bond matricization."""
        d1, q, _, d2 = self.shape
        theta = merged.reshape(d1 * q, q * d2)
        g = theta @ theta.conj().T
        return float(np.vdot(g, g).real), theta, g

    def loss(self, merged, amps=None) -> float:
        n2 = self._norm_sq(merged)
        if amps is None:
            amps = self.amplitudes(merged)
        probs = np.abs(amps) ** 2 / n2
        value = -float(np.mean(np.log(np.maximum(probs, self.psi_floor))))
        if self.penalty_weight != 0.0:
            t2, _, _ = self._purity(merged)
            value += self.penalty_weight * (2.0 * np.log(n2) - np.log(t2))
        return value

    def gradient(self, merged, amps=None) -> np.ndarray:
        n2 = self._norm_sq(merged)
        if amps is None:
            amps = self.amplitudes(merged)
        probs = np.abs(amps) ** 2 / n2
        live = probs >= self.psi_floor
        self.clamped_last = int(self.count - live.sum())
        w = np.zeros(self.count, dtype=np.complex128)
        w[live] = 1.0 / (self.count * amps[live].conj())
        d1, q, _, d2 = self.shape
        grad = ((self._la_c * w[:, None]).T @ self._rb_c).reshape(self.shape)
        grad -= (live.sum() / self.count / n2) * merged
        lam = self.penalty_weight
        if lam != 0.0:
            t2, theta, g = self._purity(merged)
            tau = 2.0 * (g @ theta)
            grad += lam * tau.reshape(self.shape) / t2
            grad -= (2.0 * lam / n2) * merged
        return grad


def two_site_gradient(mps, bond, dataset, penalty_weight, psi_floor=1e-12) -> TwoSiteTensor:
    """Ascent direction of -L for the merged tensor at ``bond``."""
    work = mps if mps.canonical_center in (bond, bond + 1) else mps.canonicalize(bond)
    obj = BondObjective(work, bond, dataset, penalty_weight, psi_floor)
    merged = work.merge_adjacent(bond)
    return TwoSiteTensor(obj.gradient(merged.data), bond)


def _optimize_bond(obj, merged, config):
    step = config.step_size
    amps = obj.amplitudes(merged)
    loss = obj.loss(merged, amps)
    for _ in range(config.grad_steps_per_bond):
        if step == 0.0:
            break
        grad = obj.gradient(merged, amps)
        trial = merged + step * grad
        trial_amps = obj.amplitudes(trial)
        trial_loss = obj.loss(trial, trial_amps)
        if trial_loss <= loss:
            merged, loss, amps = trial, trial_loss, trial_amps
            step = min(step * 1.2, config.step_size)
        else:
            step *= config.step_backoff
    return merged


class _SweepEngine:
    """Mutable sweep state: tensor chain plus cached shot environments."""

    def __init__(self, mps, dataset, config):
        config.validate()
        _check_dataset(mps, dataset)
        if mps.n_sites < 2:
            raise ParameterError("training needs at least 2 sites")
        start = mps.canonicalize(0)
        self.tensors = [start.tensor(k).copy() for k in range(mps.n_sites)]
        self.spin = mps.spin
        self.n = mps.n_sites
        self.cfg = config
        self.rows = _site_rows(dataset, self.spin)
        count = len(dataset)
        self.left = [None] * (self.n + 1)
        self.right = [None] * (self.n + 1)
        self.left[0] = np.ones((count, 1), dtype=np.complex128)
        self.right[self.n] = np.ones((count, 1), dtype=np.complex128)
        for j in range(self.n - 1, 1, -1):
            self.right[j] = _contract_right(self.tensors[j], self.rows[j], self.right[j + 1])
        self.center = 0
        self.clamped = 0

    def _train_bond(self, k, lam, move):
        cfg = self.cfg
        obj = BondObjective.from_environments(
            self.left[k], self.rows[k], self.rows[k + 1], self.right[k + 2],
            lam, cfg.psi_floor,
        )
        merged = np.einsum("ivj,jwl->ivwl", self.tensors[k], self.tensors[k + 1])
        merged = _optimize_bond(obj, merged, cfg)
        self.clamped += obj.clamped_last
        merged /= np.linalg.norm(merged)
        d1, q, _, d2 = merged.shape
        eta = cfg.bond_eta(d1, q, d2, obj.count)
        a, b, _ = split_two_site(TwoSiteTensor(merged, k), cfg.d_cap, eta, move)
        self.tensors[k], self.tensors[k + 1] = a, b
        if move == "right":
            self.left[k + 1] = _contract_left(self.left[k], a, self.rows[k])
            self.center = k + 1
        else:
            self.right[k + 1] = _contract_right(b, self.rows[k + 1], self.right[k + 2])
            self.center = k

    def sweep(self, lam) -> LossReport:
        """One full left-to-right-to-left pass at penalty weight ``lam``."""
        last = self.n - 2
        for k in range(last + 1):
            self._train_bond(k, lam, "right" if k < last else "left")
        for k in range(last, -1, -1):
            self._train_bond(k, lam, "left")
        return self.report(lam)

    def current_nll(self) -> float:
        left = self.left[0]
        for j in range(self.n):
            left = _contract_left(left, self.tensors[j], self.rows[j])
        probs = np.abs(left[:, 0]) ** 2
        return float(-np.mean(np.log(np.maximum(probs, self.cfg.psi_floor))))

    def report(self, lam) -> LossReport:
        # entropy across bond 0, where the sweep parks the center
        t = self.tensors[0]
        d1, q, d2 = t.shape
        s2 = np.linalg.svd(t.reshape(d1 * q, d2), compute_uv=False) ** 2
        s2 /= s2.sum()
        entropy = float(-np.log(np.sum(s2**2)))
        return LossReport.build(self.current_nll(), entropy, lam)

    def to_mps(self) -> MatrixProductState:
        return MatrixProductState(self.tensors, center=self.center, copy=True)


def sweep(mps, dataset, config, lam) -> tuple[MatrixProductState, LossReport]:
    """Run a single two-site sweep and return the updated state and its loss."""
    engine = _SweepEngine(mps, dataset, config)
    rep = engine.sweep(lam)
    return engine.to_mps(), rep


def write_loss_history(path, reports) -> None:
    """Per-sweep loss breakdown as CSV: sweep, lambda, nll, penalty, total."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["sweep", "lambda", "nll", "penalty", "total"])
        for i, rep in enumerate(reports):
            writer.writerow(
                [i, repr(rep.lam), repr(rep.nll), repr(rep.penalty), repr(rep.total)]
            )


def train_stage(mps, dataset, config) -> tuple[MatrixProductState, list[LossReport]]:
    """Sweep with an annealed penalty until the total loss settles.

    Sweep t uses penalty weight lambda0 * lambda_decay**t.  Stops when the
    relative change of the total loss drops below convergence_tol or after
    sweeps_per_stage sweeps; the appended final report is taken at lam = 0.
    """
    engine = _SweepEngine(mps, dataset, config)
    history = []
    lam = config.lambda0
    prev = None
    for _ in range(config.sweeps_per_stage):
        rep = engine.sweep(lam)
        history.append(rep)
        if prev is not None:
            if abs(rep.total - prev) <= config.convergence_tol * max(1.0, abs(prev)):
                break
        prev = rep.total
        lam *= config.lambda_decay
    history.append(engine.report(0.0))
    return engine.to_mps(), history
