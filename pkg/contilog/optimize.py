"""Multistart projected descent over products of Hilbert balls.

Quantifiers over continuous sorts are evaluated by minimizing the body over the
ball(s); the best evaluated point gives a certified one-sided bound, the other side
is heuristic.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple

import numpy as np

from . import config
from .mstruct import BallCarrier

logger = logging.getLogger(__name__)

Objective = Callable[[Tuple[np.ndarray, ...]], float]


@dataclass
class SearchResult:
    value: float
    point: Tuple[np.ndarray, ...]
    evaluations: int
    starts: int
    converged: bool


class _Product:
    """Concatenated coordinates for several balls."""

    def __init__(self, balls: Sequence[BallCarrier]):
        self.balls = list(balls)
        self.offsets = np.cumsum([0] + [b.real_dim for b in self.balls])
        self.radius = max(b.radius for b in self.balls)

    def split(self, x: np.ndarray) -> Tuple[np.ndarray, ...]:
        return tuple(x[a:b] for a, b in zip(self.offsets, self.offsets[1:]))

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.concatenate([b.project(part) for b, part in zip(self.balls, self.split(x))])

    def start_points(self, rng: np.random.Generator, count: int) -> List[np.ndarray]:
        points = [np.zeros(self.offsets[-1])]
        for i in range(1, count):
            if i % 2:
                parts = [b.sphere(rng)[0] for b in self.balls]
            else:
                parts = [b.sample(rng)[0] for b in self.balls]
            points.append(np.concatenate(parts))
        return points


def minimize_on_balls(objective: Objective, balls: Sequence[BallCarrier], rng: np.random.Generator,
                      starts: int = config.MULTISTART, max_steps: int = config.MAX_DESCENT_STEPS,
                      stationarity: float = config.STATIONARITY, fd_step: float = 1e-7) -> SearchResult:
    """Minimize ``objective`` over the product of ``balls``.

    Each start runs normalized projected descent with a finite-difference gradient,
    growing the step after a success and halving it after a failure; a run stops
    when the gradient or the step falls below ``stationarity``.
    """
    space = _Product(balls)
    evaluations = 0

    def f(x: np.ndarray) -> float:
        nonlocal evaluations
        evaluations += 1
        return float(objective(space.split(x)))

    def gradient(x: np.ndarray) -> np.ndarray:
        g = np.zeros_like(x)
        for i in range(len(x)):
            e = np.zeros_like(x)
            e[i] = fd_step
            g[i] = (f(space.project(x + e)) - f(space.project(x - e))) / (2 * fd_step)
        return g

    best_value, best_point, best_converged = np.inf, None, False
    for run, x in enumerate(space.start_points(rng, max(1, starts))):
        fx = f(x)
        step = space.radius / 2
        converged = False
        for _ in range(max_steps):
            g = gradient(x)
            norm = float(np.linalg.norm(g))
            if norm < stationarity:
                converged = True
                break
            direction = g / norm
            while step >= stationarity:
                y = space.project(x - step * direction)
                fy = f(y)
                if fy < fx:
                    x, fx = y, fy
                    step = min(step * 1.5, 2 * space.radius)
                    break
                step /= 2
            else:
                converged = True
                break
        if fx < best_value:
            best_value, best_point, best_converged = fx, x, converged
        logger.debug("descent start %d ended at %.12g (converged=%s)", run, fx, converged)
    return SearchResult(best_value, space.split(best_point), evaluations, max(1, starts), best_converged)
