"""Central-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import NonFiniteError, Tensor


@dataclass
class GradCheckReport:
    max_rel_err: float
    max_abs_err: float
    n_coords: int
    worst: tuple[int, int] | None = None  # (param index, flat coordinate)
    pairs: np.ndarray | None = None       # [n_coords, 2] autodiff and finite-difference values

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_err < tol

    def rel_err(self, floor: float = 1e-8) -> float:
        """Max relative error with a different denominator floor."""
        g_ad, g_fd = self.pairs[:, 0], self.pairs[:, 1]
        den = np.maximum(np.maximum(np.abs(g_ad), np.abs(g_fd)), floor)
        return float(np.max(np.abs(g_ad - g_fd) / den)) if len(den) else 0.0


def _report(g_ad: np.ndarray, g_fd: np.ndarray, where: list[tuple[int, int]]) -> GradCheckReport:
    if not len(g_ad):
        return GradCheckReport(0.0, 0.0, 0, None, np.zeros((0, 2)))
    diff = np.abs(g_ad - g_fd)
    rel = diff / np.maximum(np.maximum(np.abs(g_ad), np.abs(g_fd)), 1e-8)
    k = int(rel.argmax())
    worst = where[k] if rel[k] > 0 else None
    return GradCheckReport(float(rel[k]), float(diff.max()), len(g_ad), worst, np.stack([g_ad, g_fd], axis=1))


def grad_check_many(f: Callable[[], dict[str, Tensor]], params: Tensor | Sequence[Tensor], eps: float = 1e-5,
                    max_coords: int | None = None, rng: np.random.Generator | None = None
                    ) -> dict[str, GradCheckReport]:
    """Like :func:`grad_check` for several scalars computed by one forward pass.

    ``f`` returns a mapping of named scalars. Each perturbation runs ``f``
    twice in total, whatever the number of outputs.
    """
    if not 0 < eps <= 1e-2:
        raise ValueError("eps must lie in (0, 1e-2]")
    if isinstance(params, Tensor):
        params = [params]
    names = list(f())
    analytic = {}
    for name in names:
        for p in params:
            p.grad = None
        f()[name].backward()
        analytic[name] = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    fd = {name: [] for name in names}
    ad = {name: [] for name in names}
    where = []
    for pi, p in enumerate(params):
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = (rng or np.random.default_rng(0)).choice(flat.size, max_coords, replace=False)
        for j in coords:
            orig = flat[j]
            flat[j] = orig + eps
            plus = {k: float(v.data) for k, v in f().items()}
            flat[j] = orig - eps
            minus = {k: float(v.data) for k, v in f().items()}
            flat[j] = orig
            where.append((pi, int(j)))
            for name in names:
                fp, fm = plus[name], minus[name]
                if not (np.isfinite(fp) and np.isfinite(fm)):
                    raise NonFiniteError(f"{name} not finite at perturbed coordinate {j} of param {pi}")
                fd[name].append((fp - fm) / (2 * eps))
                ad[name].append(analytic[name][pi].reshape(-1)[j])
    for p in params:
        p.grad = None
    return {name: _report(np.array(ad[name]), np.array(fd[name]), where) for name in names}


def grad_check(f: Callable[[], Tensor], params: Tensor | Sequence[Tensor], eps: float = 1e-5,
               max_coords: int | None = None, rng: np.random.Generator | None = None
               ) -> GradCheckReport:
    """Compare reverse-mode gradients of the scalar ``f()`` against central differences.

    ``f`` must rebuild its graph from the current values of ``params`` on
    every call. With ``max_coords`` set, that many coordinates per parameter
    are sampled (using ``rng``) instead of checking all of them.
    """
    return grad_check_many(lambda: {"f": f()}, params, eps, max_coords, rng)["f"]
