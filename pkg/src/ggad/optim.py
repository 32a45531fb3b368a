"""Parameter storage, Adam, and a finite-difference gradient checker."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ParamStore:
    """Named parameter matrices with same-shape gradient accumulators."""

    def __init__(self, params: dict[str, np.ndarray] | None = None, seed: int | None = None):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.seed = seed
        for name, value in (params or {}).items():
            self.add(name, value)

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        value = np.asarray(value, dtype=np.float64)
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def __iter__(self):
        return iter(self.params)

    def __len__(self) -> int:
        return len(self.params)

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def accumulate(self, grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            self.grads[name] += g

    def copy(self) -> ParamStore:
        out = ParamStore(seed=self.seed)
        for name, value in self.params.items():
            out.add(name, value.copy())
        return out

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.params.values())


def init_params(shapes, seed: int = 0) -> ParamStore:
    """Xavier-uniform initialisation, bound sqrt(6 / (rows + cols)).

    Draws happen in the order given, from one generator seeded by ``seed``.
    """
    rng = np.random.default_rng(seed)
    store = ParamStore(seed=seed)
    for name, rows, cols in shapes:
        if rows < 1 or cols < 1:
            raise ValueError(f"parameter {name!r} needs positive dimensions, got {rows}x{cols}")
        if name in store.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        bound = np.sqrt(6.0 / (rows + cols))
        store.add(name, rng.uniform(-bound, bound, size=(rows, cols)))
    return store


@dataclass
class OptimizerState:
    learning_rate: float = 5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(p: ParamStore, s: OptimizerState) -> tuple[ParamStore, OptimizerState]:
    """One bias-corrected Adam update in place; gradients are zeroed afterwards."""
    s.step += 1
    bc1 = 1.0 - s.beta1 ** s.step
    bc2 = 1.0 - s.beta2 ** s.step
    for name, w in p.params.items():
        g = p.grads[name]
        if name not in s.m:
            s.m[name] = np.zeros_like(w)
            s.v[name] = np.zeros_like(w)
        m, v = s.m[name], s.v[name]
        m *= s.beta1
        m += (1.0 - s.beta1) * g
        v *= s.beta2
        v += (1.0 - s.beta2) * (g * g)
        w -= s.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + s.epsilon)
    p.zero_grad()
    return p, s


def _min_nonzero(a) -> float:
    a = np.abs(np.asarray(a))
    a = a[a > 0]
    return float(a.min()) if a.size else np.inf


@dataclass
class GradCheckReport:
    max_rel_error: float
    tol: float
    num_checked: int
    num_skipped: int
    worst: tuple[str, tuple[int, ...]] | None = None

    @property
    def passed(self) -> bool:
        return self.num_checked > 0 and self.max_rel_error <= self.tol


def backward_check(loss_fn, p: ParamStore, tol: float = 1e-3, num_coords: int = 32,
                   step: float = 1e-4, seed: int = 0, pattern_fn=None) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    ``loss_fn(store)`` returns ``(loss, grads)``. When ``pattern_fn(store)``
    is given it returns the boolean activation pattern of every kink
    (ReLU, hinge) together with the pre-activation values; coordinates whose
    +/- perturbation flips the pattern or lands within 1e-6 of a kink are
    excluded.
    """
    loss0, grads = loss_fn(p)
    if not np.isfinite(loss0):
        raise FloatingPointError("loss is not finite at the base point")
    rng = np.random.default_rng(seed)
    names = list(p.params)
    sizes = np.array([p.params[n].size for n in names])
    worst, worst_at, checked, skipped = 0.0, None, 0, 0
    attempts = 0
    while checked < num_coords and attempts < 20 * num_coords:
        attempts += 1
        k = rng.choice(len(names), p=sizes / sizes.sum())
        name = names[k]
        w = p.params[name]
        idx = tuple(int(rng.integers(0, d)) for d in w.shape)
        orig = w[idx]
        w[idx] = orig + step
        lp, _ = loss_fn(p)
        pat_p = pattern_fn(p) if pattern_fn else None
        w[idx] = orig - step
        lm, _ = loss_fn(p)
        pat_m = pattern_fn(p) if pattern_fn else None
        w[idx] = orig
        if not (np.isfinite(lp) and np.isfinite(lm)):
            raise FloatingPointError(f"non-finite loss when perturbing {name}{idx}")
        if pattern_fn is not None:
            (mask_p, pre_p), (mask_m, pre_m) = pat_p, pat_m
            near = min(_min_nonzero(pre_p), _min_nonzero(pre_m))
            if not np.array_equal(mask_p, mask_m) or near < 1e-6:
                skipped += 1
                continue
        numeric = (lp - lm) / (2.0 * step)
        analytic = grads[name][idx]
        denom = max(abs(numeric), abs(analytic), 1e-7)
        rel = abs(numeric - analytic) / denom
        checked += 1
        if rel > worst:
            worst, worst_at = rel, (name, idx)
    return GradCheckReport(worst, tol, checked, skipped, worst_at)
