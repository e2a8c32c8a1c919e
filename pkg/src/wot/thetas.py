"""Convex penalty functions for barycentric transport costs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .convexkit import Polytope, support_function
from .measures import StructuralError


@dataclass(frozen=True)
class ThetaOracle:
    evaluate: callable  # vector -> real
    gradient: callable  # vector -> vector (deterministic subgradient selection)
    strictly_convex: bool = False
    support_function: bool = False
    polytope: Polytope | None = None
    differentiable: bool = False
    supercoercive: bool = False
    quadratic: bool = False  # objective is quadratic along segments
    name: str = "theta"

    def validate(self, dim: int, rng: np.random.Generator, probes: int = 32,
                 tol: float = 1e-9) -> None:
        """Midpoint inequality on random segments; homogeneity when support."""
        for _ in range(probes):
            a = rng.uniform(-2, 2, dim)
            b = rng.uniform(-2, 2, dim)
            mid = self.evaluate(0.5 * (a + b))
            if mid > 0.5 * self.evaluate(a) + 0.5 * self.evaluate(b) + tol:
                raise StructuralError(f"{self.name}: midpoint convexity violated")
            if self.support_function:
                for t in (0.0, 0.5, 2.0):
                    if abs(self.evaluate(t * a) - t * self.evaluate(a)) > tol * (1 + abs(t)):
                        raise StructuralError(f"{self.name}: not positively homogeneous")


def theta_sq(scale: float = 1.0) -> ThetaOracle:
    """scale * |x|^2 (use scale=0.5 for the Moreau/prox normalization)."""
    return ThetaOracle(
        evaluate=lambda x: float(scale * np.dot(x, x)),
        gradient=lambda x: 2.0 * scale * np.asarray(x, dtype=float),
        strictly_convex=True,
        differentiable=True,
        supercoercive=True,
        quadratic=True,
        name=f"sq[{scale}]" if scale != 1.0 else "sq",
    )


def theta_abs(dim: int = 1) -> ThetaOracle:
    """Euclidean norm; the support function of the unit ball."""
    def grad(x):
        x = np.asarray(x, dtype=float)
        n = np.linalg.norm(x)
        return x / n if n > 1e-15 else np.zeros_like(x)

    poly = Polytope.interval(-1.0, 1.0) if dim == 1 else None
    return ThetaOracle(
        evaluate=lambda x: float(np.linalg.norm(x)),
        gradient=grad,
        support_function=True,
        polytope=poly,
        name="abs",
    )


def theta_pplus() -> ThetaOracle:
    """x -> max(x, 0) on the line; the support function of [0, 1]."""
    return ThetaOracle(
        evaluate=lambda x: float(max(np.asarray(x, dtype=float).ravel()[0], 0.0)),
        gradient=lambda x: np.array([1.0 if np.asarray(x).ravel()[0] > 0 else 0.0]),
        support_function=True,
        polytope=Polytope.interval(0.0, 1.0),
        name="pplus",
    )


def theta_support(k: Polytope) -> ThetaOracle:
    def grad(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        vals = k.vertices @ x
        return k.vertices[int(np.argmax(vals))].copy()

    return ThetaOracle(
        evaluate=lambda x: support_function(k, x),
        gradient=grad,
        support_function=True,
        polytope=k,
        name="support",
    )


def scaled(theta: ThetaOracle, beta: float) -> ThetaOracle:
    return ThetaOracle(
        evaluate=lambda x: beta * theta.evaluate(x),
        gradient=lambda x: beta * theta.gradient(x),
        strictly_convex=theta.strictly_convex and beta > 0,
        support_function=theta.support_function,
        polytope=theta.polytope,
        differentiable=theta.differentiable,
        supercoercive=theta.supercoercive and beta > 0,
        quadratic=theta.quadratic,
        name=f"{beta}*{theta.name}",
    )
