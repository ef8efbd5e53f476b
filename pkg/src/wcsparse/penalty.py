"""Weakly convex sparseness measures and their generalized gradients.

Each measure F is even, zero at the origin, non-decreasing on [0, inf),
has non-increasing F(t)/t, and is weakly convex with a known parameter
rho <= 0.  The slope at the origin alpha = lim F(t)/t is finite and
positive.  A penalty may be rescaled in value (prescale * F) and in
argument (F(argscale * t)); both scalings have closed-form effects on
alpha and rho.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

KINDS = ("abs", "rational_p", "exp", "log", "atan", "mcp")


@dataclass(frozen=True)
class Penalty:
    """A scaled weakly convex sparseness measure.

    eval(t) = prescale * F_base(argscale * t), where F_base is selected
    by `kind` with shape parameter `sigma` (and exponent `p` for
    rational_p).  Immutable; all methods are pure.
    """

    kind: str
    sigma: float = 1.0
    p: float = 0.5
    prescale: float = 1.0
    argscale: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown penalty kind: {self.kind!r}")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not 0 <= self.p < 1:
            raise ValueError("p must lie in [0, 1)")
        if not self.prescale > 0 or not self.argscale > 0:
            raise ValueError("prescale and argscale must be positive")

    # -- scalar interface -------------------------------------------------

    def eval(self, t):
        """Penalty value; accepts scalars or arrays."""
        a = np.abs(np.asarray(t, dtype=float)) * self.argscale
        s, p = self.sigma, self.p
        if self.kind == "abs":
            v = a
        elif self.kind == "rational_p":
            v = a / (a + s) ** (1.0 - p)
        elif self.kind == "exp":
            v = -np.expm1(-s * a)
        elif self.kind == "log":
            v = np.log1p(s * a)
        elif self.kind == "atan":
            v = np.arctan(s * a)
        else:  # mcp
            v = np.where(a <= 1.0 / s, 2.0 * s * a - s * s * a * a, 1.0)
        out = self.prescale * v
        return float(out) if np.isscalar(t) or np.ndim(t) == 0 else out

    def grad(self, t):
        """One element of the generalized gradient set; 0 at t = 0.

        At points where F is differentiable this is the derivative; the
        mcp junction |t| = 1/sigma is C^1 so no selection is needed.
        """
        tt = np.asarray(t, dtype=float)
        a = np.abs(tt) * self.argscale
        s, p = self.sigma, self.p
        if self.kind == "abs":
            g = np.ones_like(a)
        elif self.kind == "rational_p":
            g = (s + p * a) / (a + s) ** (2.0 - p)
        elif self.kind == "exp":
            g = s * np.exp(-s * a)
        elif self.kind == "log":
            g = s / (1.0 + s * a)
        elif self.kind == "atan":
            g = s / (1.0 + (s * a) ** 2)
        else:  # mcp
            g = np.where(a < 1.0 / s, 2.0 * s - 2.0 * s * s * a, 0.0)
        out = self.prescale * self.argscale * np.sign(tt) * g
        return float(out) if np.isscalar(t) or np.ndim(t) == 0 else out

    # -- parameters --------------------------------------------------------

    def alpha(self) -> float:
        """Slope at the origin, lim_{t->0+} eval(t)/t."""
        s, p = self.sigma, self.p
        if self.kind == "abs":
            a0 = 1.0
        elif self.kind == "rational_p":
            a0 = s ** (p - 1.0)
        elif self.kind in ("exp", "log", "atan"):
            a0 = s
        else:  # mcp
            a0 = 2.0 * s
        return self.prescale * self.argscale * a0

    def rho(self) -> float:
        """Weak convexity parameter of the scaled measure (<= 0)."""
        s, p = self.sigma, self.p
        if self.kind == "abs":
            r0 = 0.0
        elif self.kind == "rational_p":
            r0 = (p - 1.0) * s ** (p - 2.0)
        elif self.kind in ("exp", "log"):
            r0 = -s * s / 2.0
        elif self.kind == "atan":
            r0 = -3.0 * math.sqrt(3.0) * s * s / 16.0
        else:  # mcp
            r0 = -s * s
        return self.prescale * self.argscale**2 * r0

    def nonconvexity(self) -> float:
        """Scale-invariant non-convexity -rho/alpha (>= 0)."""
        return -self.rho() / self.alpha()

    def with_unit_alpha(self) -> "Penalty":
        """Rescale the value multiplier so that alpha() == 1."""
        return replace(self, prescale=self.prescale / self.alpha())

    # -- separable penalty on vectors ---------------------------------------

    def J_eval(self, x: np.ndarray) -> float:
        """Sum of eval over coordinates."""
        return float(np.sum(self.eval(np.asarray(x, dtype=float))))

    def J_grad(self, x: np.ndarray) -> np.ndarray:
        """Coordinate-wise generalized gradient vector."""
        return self.grad(np.asarray(x, dtype=float))

    # -- JSON wire format ----------------------------------------------------

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "sigma": self.sigma,
            "p": self.p,
            "prescale": self.prescale,
            "argscale": self.argscale,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Penalty":
        return cls(
            kind=obj["kind"],
            sigma=float(obj.get("sigma", 1.0)),
            p=float(obj.get("p", 0.5)),
            prescale=float(obj.get("prescale", 1.0)),
            argscale=float(obj.get("argscale", 1.0)),
        )


def penalty_with_nonconvexity(kind: str, nonconvexity: float, sigma: float = 1.0,
                              p: float = 0.5) -> Penalty:
    """Unit-alpha penalty of the given kind with a prescribed non-convexity.

    The non-convexity is dialled in through the argument multiplier
    (non-convexity scales linearly with it), then the value multiplier
    normalizes alpha to 1.  For kind "abs" the non-convexity must be 0.
    """
    base = Penalty(kind, sigma=sigma, p=p)
    base_nc = base.nonconvexity()
    if base_nc == 0.0:
        if nonconvexity != 0.0:
            raise ValueError(f"kind {kind!r} has zero non-convexity for any scaling")
        return base.with_unit_alpha()
    return replace(base, argscale=nonconvexity / base_nc).with_unit_alpha()
