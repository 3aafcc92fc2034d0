"""Local solvers and objective functions.

Two solver families share the ``LocalUpdate`` contract:

* ``scd_local_solve``: stochastic dual coordinate descent on the hinge-loss
  SVM dual.  Dual variables live inside the chunks and are mutated in
  place; the returned weight delta is scaled so that sample-count-weighted
  averaging across workers reproduces the aggregate dual-to-primal map.
* ``sgd_local_solve``: local SGD on logistic loss with classic momentum.
  Chunk state is read-only; the delta is the local drift of the weights.

Both are deterministic functions of (chunk contents, model, seed).
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy import sparse

from .data import DataChunk, Model, OwnershipPhase
from .errors import InsufficientSamples, StateMissing

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


class Loss(Enum):
    HINGE = "hinge"
    LOGISTIC = "logistic"


@dataclass(frozen=True)
class HyperParams:
    """Solver hyper-parameters.

    ``sigma_prime=None`` means "derive per worker": each worker uses
    n_total / n_local, the safe aggregation bound for averaging-style
    merges.  Passing an explicit value overrides that on every worker.
    """

    lam: float
    loss: Loss = Loss.HINGE
    L: int = 1
    H: int = 1
    base_lr: float = 0.1
    momentum: float = 0.0
    sigma_prime: Optional[float] = None

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.L < 1:
            raise ValueError("L must be >= 1")
        if self.H < 1:
            raise ValueError("H must be >= 1")
        if self.loss is Loss.HINGE and self.L != 1:
            raise ValueError("hinge-loss dual coordinate steps require L == 1")
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.sigma_prime is not None and self.sigma_prime <= 0:
            raise ValueError("sigma_prime must be positive")


@dataclass
class LocalUpdate:
    """One worker's solve output plus its merge weight numerator.

    worker_id and iteration are stamped by the dispatching worker; a bare
    solver call leaves them at -1.
    """

    delta_weights: np.ndarray
    samples_processed: int
    worker_id: int = -1
    iteration: int = -1

    def __post_init__(self):
        self.delta_weights = np.asarray(self.delta_weights,
                                        dtype=np.float64)
        if not np.all(np.isfinite(self.delta_weights)):
            raise ValueError("delta_weights must be finite")
        if self.samples_processed < 0:
            raise ValueError("samples_processed must be non-negative")


class LocalView:
    """Concatenated CSR view over an ordered set of chunks.

    Chunks are concatenated in ascending chunk id so that any reduction
    over the view visits samples in a canonical order regardless of which
    worker holds which chunk.
    """

    def __init__(self, chunks: Sequence[DataChunk], dimension: int,
                 with_duals: bool = False):
        ordered = sorted(chunks, key=lambda c: c.chunk_id)
        if not ordered:
            raise InsufficientSamples("no chunks in local view")
        self.chunks = ordered
        self.dimension = dimension
        parts_ind = []
        parts_val = []
        parts_lab = []
        indptr = [np.zeros(1, dtype=np.int64)]
        offset = 0
        bounds = []
        for chunk in ordered:
            ptr, ind, val, lab = chunk.feature_arrays()
            parts_ind.append(ind)
            parts_val.append(val)
            parts_lab.append(lab)
            indptr.append(ptr[1:] + offset)
            offset += ptr[-1]
            bounds.append(len(lab))
        self.indptr = np.concatenate(indptr)
        self.indices = np.concatenate(parts_ind)
        self.values = np.concatenate(parts_val)
        self.labels = np.concatenate(parts_lab)
        self.n_samples = int(self.labels.shape[0])
        self._bounds = np.cumsum([0] + bounds)
        self._matrix = None
        self._sq_norms = None
        self.duals = None
        if with_duals:
            for chunk in ordered:
                if chunk.dual_state is None:
                    raise StateMissing(
                        f"chunk {chunk.chunk_id} has no dual state")
            # reading state is fine in either phase; only the write-back
            # in scatter_duals needs task ownership
            self.duals = np.concatenate(
                [np.asarray(chunk.dual_state, dtype=np.float64)
                 for chunk in ordered])

    def matrix(self) -> sparse.csr_matrix:
        if self._matrix is None:
            self._matrix = sparse.csr_matrix(
                (self.values, self.indices, self.indptr),
                shape=(self.n_samples, self.dimension))
        return self._matrix

    def sq_norms(self) -> np.ndarray:
        if self._sq_norms is None:
            sq = np.zeros(self.n_samples)
            np.add.at(sq, np.repeat(np.arange(self.n_samples),
                                    np.diff(self.indptr)),
                      self.values * self.values)
            self._sq_norms = sq
        return self._sq_norms

    def scatter_duals(self, phase: OwnershipPhase) -> None:
        """Write the flat dual array back into the owning chunks."""
        if self.duals is None:
            raise StateMissing("view was built without dual state")
        for k, chunk in enumerate(self.chunks):
            lo, hi = self._bounds[k], self._bounds[k + 1]
            chunk.dual_view(phase)[:] = self.duals[lo:hi]

    def gather_duals(self) -> None:
        """Refresh the flat dual array from the owning chunks."""
        if self.duals is None:
            raise StateMissing("view was built without dual state")
        for k, chunk in enumerate(self.chunks):
            lo, hi = self._bounds[k], self._bounds[k + 1]
            self.duals[lo:hi] = np.asarray(chunk.dual_state)


@njit(cache=True)
def _scd_steps(indptr, indices, values, labels, sq_norms, duals, w_loc,
               picks, lam_n, sigma_prime):  # pragma: no cover - jitted
    for t in range(picks.shape[0]):
        i = picks[t]
        sq = sq_norms[i]
        if sq == 0.0:
            continue
        s = indptr[i]
        e = indptr[i + 1]
        y = labels[i]
        wx = 0.0
        for p in range(s, e):
            wx += values[p] * w_loc[indices[p]]
        g = 1.0 - y * wx
        a = duals[i]
        na = a + lam_n * g / (sigma_prime * sq)
        if na < 0.0:
            na = 0.0
        elif na > 1.0:
            na = 1.0
        delta = na - a
        if delta != 0.0:
            duals[i] = na
            coef = sigma_prime * delta * y / lam_n
            for p in range(s, e):
                w_loc[indices[p]] += coef * values[p]


def scd_local_solve(local_chunks: Sequence[DataChunk], model: Model,
                    hp: HyperParams, n_total: int, steps: int,
                    rng_seed: int,
                    phase: OwnershipPhase = OwnershipPhase.TASK_OWNED,
                    view: Optional[LocalView] = None) -> LocalUpdate:
    """Run ``steps`` dual coordinate updates over the local chunks.

    Coordinates are drawn uniformly with replacement from the local
    samples.  Dual variables are updated in place inside the chunks.  The
    returned ``delta_weights`` carries the sigma_prime scaling, so a
    sample-count-weighted average of worker deltas equals the exact
    dual-to-primal map of the combined dual change.
    """
    if hp.loss is not Loss.HINGE:
        raise ValueError("dual coordinate solver requires hinge loss")
    if steps < 0:
        raise ValueError("steps must be non-negative")
    if view is None:
        view = LocalView(local_chunks, model.dimension, with_duals=True)
    elif view.duals is None:
        raise StateMissing("view was built without dual state")
    n_local = view.n_samples
    if n_local == 0:
        raise InsufficientSamples("local view holds no samples")
    sigma = hp.sigma_prime if hp.sigma_prime is not None \
        else n_total / n_local
    rng = np.random.default_rng(rng_seed)
    picks = rng.integers(0, n_local, size=steps)
    w_loc = model.weights.copy()
    _scd_steps(view.indptr, view.indices, view.values, view.labels,
               view.sq_norms(), view.duals, w_loc, picks,
               hp.lam * n_total, sigma)
    view.scatter_duals(phase)
    return LocalUpdate(delta_weights=w_loc - model.weights,
                       samples_processed=min(steps, n_local))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def effective_lr(base_lr: float, n_workers: int) -> float:
    """Square-root scaling of the step size with the worker count."""
    if n_workers < 1:
        raise ValueError("n_workers must be >= 1")
    return base_lr * float(np.sqrt(n_workers))


def sgd_local_solve(local_chunks: Sequence[DataChunk], model: Model,
                    hp: HyperParams, rng_seed: int,
                    steps: Optional[int] = None,
                    lr: Optional[float] = None,
                    view: Optional[LocalView] = None) -> LocalUpdate:
    """Run H local mini-batch SGD steps and return the weight drift.

    Each step draws ``L`` distinct samples from the local pool, takes the
    mean logistic-loss gradient over the dense batch, and applies a
    momentum update: v <- momentum * v + grad; w <- w - lr * v.  With
    ``steps=1`` this is exactly one mini-batch SGD step.
    """
    if hp.loss is not Loss.LOGISTIC:
        raise ValueError("local SGD solver requires logistic loss")
    if view is None:
        view = LocalView(local_chunks, model.dimension)
    n_local = view.n_samples
    if n_local < hp.L:
        raise InsufficientSamples(
            f"batch size {hp.L} exceeds local pool {n_local}")
    n_steps = hp.H if steps is None else steps
    if n_steps < 0:
        raise ValueError("steps must be non-negative")
    step_lr = hp.base_lr if lr is None else lr
    rng = np.random.default_rng(rng_seed)
    w_loc = model.weights.copy()
    velocity = np.zeros_like(w_loc)
    matrix = view.matrix()
    for _ in range(n_steps):
        batch = rng.choice(n_local, size=hp.L, replace=False)
        xb = np.asarray(matrix[batch].todense())
        yb = view.labels[batch]
        margins = xb @ w_loc
        s = _sigmoid(-yb * margins)
        grad = (xb * (-(yb * s))[:, None]).mean(axis=0)
        velocity = hp.momentum * velocity + grad
        w_loc = w_loc - step_lr * velocity
    return LocalUpdate(delta_weights=w_loc - model.weights,
                       samples_processed=min(n_steps * hp.L, n_local))


def primal_objective(model: Model, view: LocalView, lam: float) -> float:
    """Hinge-loss primal: (lam/2)||w||^2 + mean hinge over the view."""
    w = model.weights
    margins = view.matrix() @ w
    hinge = np.maximum(0.0, 1.0 - view.labels * margins)
    return 0.5 * lam * float(w @ w) + float(hinge.sum()) / view.n_samples


def dual_objective(view: LocalView, lam: float) -> float:
    """SVM dual value of the duals currently stored in the view."""
    if view.duals is None:
        raise StateMissing("view was built without dual state")
    n = view.n_samples
    w_alpha = dual_to_primal(view, lam)
    return float(view.duals.sum()) / n \
        - 0.5 * lam * float(w_alpha @ w_alpha)


def dual_to_primal(view: LocalView, lam: float) -> np.ndarray:
    """Map duals to weights: w(alpha) = (1/(lam n)) sum alpha_i y_i x_i."""
    if view.duals is None:
        raise StateMissing("view was built without dual state")
    z = view.duals * view.labels
    return np.asarray(view.matrix().T @ z) / (lam * view.n_samples)


def duality_gap(model: Model, chunks: Sequence[DataChunk], lam: float,
                dimension: int,
                view: Optional[LocalView] = None) -> float:
    """Primal value minus dual value over the full chunk set.

    Chunks are reduced in ascending chunk id, so the result is identical
    no matter how the chunks are distributed across workers.  A pure
    read: valid in either ownership phase.
    """
    if view is None:
        view = LocalView(chunks, dimension, with_duals=True)
    else:
        view.gather_duals()
    return primal_objective(model, view, lam) - dual_objective(view, lam)


def evaluate(model: Model, view: LocalView, loss: Loss) -> tuple:
    """Return (mean loss, sign accuracy) of the model on the view.

    Zero margins count as the positive class.
    """
    margins = view.matrix() @ model.weights
    y = view.labels
    if loss is Loss.HINGE:
        value = float(np.maximum(0.0, 1.0 - y * margins).mean())
    else:
        value = float(np.logaddexp(0.0, -y * margins).mean())
    pred = np.where(margins >= 0.0, 1.0, -1.0)
    return value, float((pred == y).mean())
