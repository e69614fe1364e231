"""Matrix group families: invariant forms, random sampling, finite enumeration.

Four families are supported: the orthogonal group O(d), the special
orthogonal group SO(d), the Lorentz group O(1, d-1) acting on R^d with the
Minkowski form diag(+1, -1, ..., -1), and the cyclic group C_n acting on the
plane by rotations of 2*pi/n.

All objects are immutable values; samplers take an explicit seed.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

import numpy as np


class Family(Enum):
    ORTHOGONAL = "O"
    SPECIAL_ORTHOGONAL = "SO"
    LORENTZ = "O(1,d)"
    CYCLIC = "C"


# Defining-relation tolerances, per family.
ORTHO_TOL = 1e-10
DET_TOL = 1e-8
LORENTZ_TOL = 1e-8


@dataclass(frozen=True)
class GroupSpec:
    """A matrix group family together with its representation dimension.

    ``d`` is the dimension the base representation acts on; for the Lorentz
    family it counts one time plus the spatial dimensions.  ``n`` is the
    order and only meaningful for the cyclic family (which acts on d = 2).
    """

    family: Family
    d: int
    n: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if self.family is Family.LORENTZ and self.d < 2:
            raise ValueError("Lorentz group needs d >= 2 (time plus space)")
        if self.family is Family.CYCLIC:
            if self.n < 1:
                raise ValueError(f"cyclic group needs n >= 1, got {self.n}")
            if self.d != 2:
                raise ValueError("cyclic group acts on the plane, d must be 2")

    @property
    def is_finite(self) -> bool:
        return self.family is Family.CYCLIC

    def __str__(self) -> str:
        if self.family is Family.ORTHOGONAL:
            return f"O({self.d})"
        if self.family is Family.SPECIAL_ORTHOGONAL:
            return f"SO({self.d})"
        if self.family is Family.LORENTZ:
            return f"O(1,{self.d - 1})"
        return f"C{self.n}"


_GROUP_RE = re.compile(
    r"^\s*(?:(O|SO)\((\d+)\)|O\(1,\s*(\d+)\)|C(\d+))\s*$"
)


def parse_group(text: str) -> GroupSpec:
    """Parse a group string: "O(5)", "SO(3)", "O(1,3)", "C4"."""
    m = _GROUP_RE.match(text)
    if m is None:
        raise ValueError(f"cannot parse group spec {text!r}")
    if m.group(3) is not None:
        return GroupSpec(Family.LORENTZ, d=1 + int(m.group(3)))
    if m.group(4) is not None:
        return GroupSpec(Family.CYCLIC, d=2, n=int(m.group(4)))
    fam = Family.ORTHOGONAL if m.group(1) == "O" else Family.SPECIAL_ORTHOGONAL
    return GroupSpec(fam, d=int(m.group(2)))


def metric_form(spec: GroupSpec) -> np.ndarray:
    """The invariant bilinear form of the group: g.T @ form @ g == form."""
    if spec.family is Family.LORENTZ:
        eta = -np.eye(spec.d)
        eta[0, 0] = 1.0
        return eta
    return np.eye(spec.d)


def metric_signs(spec: GroupSpec) -> np.ndarray:
    """Diagonal of the invariant form (all forms here are diagonal)."""
    return np.diag(metric_form(spec)).copy()


def _haar_orthogonal(rng: np.random.Generator, d: int) -> np.ndarray:
    # QR of a Gaussian matrix, with R's diagonal signs fixed so the
    # distribution is Haar over O(d) rather than biased by the factorization.
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def rotation_2d(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def boost_matrix(d: int, direction: np.ndarray, rapidity: float) -> np.ndarray:
    """Pure boost along a unit spatial ``direction`` in R^(d-1)."""
    n = np.asarray(direction, dtype=float)
    n = n / np.linalg.norm(n)
    ch, sh = np.cosh(rapidity), np.sinh(rapidity)
    m = np.eye(d)
    m[0, 0] = ch
    m[0, 1:] = sh * n
    m[1:, 0] = sh * n
    m[1:, 1:] = np.eye(d - 1) + (ch - 1.0) * np.outer(n, n)
    return m


def cyclic_element(spec: GroupSpec, index: int) -> np.ndarray:
    """The index-th power of the C_n generator as a planar rotation."""
    return rotation_2d(2.0 * np.pi * (index % spec.n) / spec.n)


def sample_element(spec: GroupSpec, seed: int) -> np.ndarray:
    """Draw a random group element, deterministic in ``seed``.

    Continuous families use the orthogonal factorization of a Gaussian
    matrix (Haar); the Lorentz family composes a random spatial rotation
    with a boost of rapidity uniform in [-2, 2]; C_n draws a uniform index.
    """
    rng = np.random.default_rng(seed)
    if spec.family is Family.ORTHOGONAL:
        m = _haar_orthogonal(rng, spec.d)
        # Flip one column half the time so both determinant components occur.
        if rng.random() < 0.5:
            m = m.copy()
            m[:, 0] = -m[:, 0]
        return m
    if spec.family is Family.SPECIAL_ORTHOGONAL:
        m = _haar_orthogonal(rng, spec.d)
        if np.linalg.det(m) < 0:
            m = m.copy()
            m[:, 0] = -m[:, 0]
        return m
    if spec.family is Family.LORENTZ:
        rot = np.eye(spec.d)
        if spec.d > 2:
            rot[1:, 1:] = _haar_orthogonal(rng, spec.d - 1)
        direction = rng.standard_normal(spec.d - 1)
        if np.linalg.norm(direction) < 1e-12:
            direction = np.ones(spec.d - 1)
        rapidity = rng.uniform(-2.0, 2.0)
        return boost_matrix(spec.d, direction, rapidity) @ rot
    return cyclic_element(spec, int(rng.integers(spec.n)))


def enumerate_elements(spec: GroupSpec) -> list[np.ndarray]:
    """All elements of a finite group; rejects continuous families."""
    if not spec.is_finite:
        raise ValueError(f"{spec} is not finite; cannot enumerate")
    return [cyclic_element(spec, k) for k in range(spec.n)]


def check_element(spec: GroupSpec, m: np.ndarray) -> float:
    """Max-norm residual of the family's defining relation for ``m``."""
    eta = metric_form(spec)
    residual = float(np.max(np.abs(m.T @ eta @ m - eta)))
    if spec.family is Family.SPECIAL_ORTHOGONAL:
        residual = max(residual, abs(np.linalg.det(m) - 1.0))
    return residual
