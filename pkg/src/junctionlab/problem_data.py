"""Given data f, g, d and their admissibility checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expressions import Expression, parse_expression

STANDARD = "standard"
UNCONSTRAINED = "unconstrained"
TRACE_TOL = 1e-12


@dataclass(frozen=True)
class ProblemData:
    """Load ``f`` on the whole junction, obstacle ``g`` and side flux ``d`` on D0.

    In ``unconstrained`` mode the obstacle is switched off; this lies outside
    the admissible data class and is meant for validation runs only.
    """

    f: Expression
    g: Expression
    d: Expression
    g_mode: str = STANDARD

    def __post_init__(self):
        for name in ("f", "g", "d"):
            val = getattr(self, name)
            if isinstance(val, str):
                object.__setattr__(self, name, parse_expression(val))
            elif isinstance(val, (int, float)):
                object.__setattr__(self, name, parse_expression(repr(float(val))))
        if self.g_mode not in (STANDARD, UNCONSTRAINED):
            raise ValueError(f"g_mode must be {STANDARD!r} or {UNCONSTRAINED!r}, got {self.g_mode!r}")

    @classmethod
    def from_strings(cls, f="0", g="0", d="0", g_mode=STANDARD) -> "ProblemData":
        return cls(parse_expression(f), parse_expression(g), parse_expression(d), g_mode)

    @property
    def constrained(self) -> bool:
        return self.g_mode == STANDARD

    def x1_independent(self) -> bool:
        return not any(e.depends_on("x1") for e in (self.f, self.g, self.d))

    def describe(self) -> dict:
        return {"f": self.f.text, "g": self.g.text, "d": self.d.text, "g_mode": self.g_mode}


@dataclass(frozen=True)
class Violation:
    condition: str
    point: tuple[float, float]
    value: float

    def __str__(self):
        return f"{self.condition} at (x1={self.point[0]:.6g}, x2={self.point[1]:.6g}): value {self.value:.6g}"


def _first_bad(mask, x1, x2, vals, condition):
    idx = int(np.flatnonzero(mask)[0])
    return Violation(condition, (float(x1[idx]), float(x2[idx])), float(vals[idx]))


def validate(data: ProblemData, config, mesh=None) -> list[Violation]:
    """Return the violated data conditions (empty when admissible).

    ``mesh`` defaults to the limit mesh of ``config``, which covers the
    whole of Omega_1; finiteness is checked at its 2x2 Gauss points.
    """
    from .assembly import quadrature_points
    from .geometry import D0, build_limit_mesh

    out: list[Violation] = []
    x1 = np.linspace(0.0, config.a, 1000)
    if data.constrained:
        for level, name in ((0.0, "g(x1, 0) = 0"), (-config.l, "g(x1, -l) = 0")):
            x2 = np.full_like(x1, level)
            vals = data.g(x1, x2)
            bad = ~(np.abs(vals) <= TRACE_TOL)
            if bad.any():
                out.append(_first_bad(bad, x1, x2, vals, f"zero trace {name}"))
    if mesh is None:
        mesh = build_limit_mesh(config)
    pts = quadrature_points(mesh).reshape(-1, 2)
    vals = data.f(pts[:, 0], pts[:, 1])
    bad = ~np.isfinite(vals)
    if bad.any():
        out.append(_first_bad(bad, pts[:, 0], pts[:, 1], vals, "f finite"))
    d0 = mesh.element_mask(D0) if mesh.kind == "limit" else ~mesh.element_mask("body")
    pts = quadrature_points(mesh)[d0].reshape(-1, 2)
    for name in ("g", "d"):
        vals = getattr(data, name)(pts[:, 0], pts[:, 1])
        bad = ~np.isfinite(vals)
        if bad.any():
            out.append(_first_bad(bad, pts[:, 0], pts[:, 1], vals, f"{name} finite"))
    return out
