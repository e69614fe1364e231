"""Deterministic generators for the synthetic regression and dynamics tasks.

Every generator is a pure function of its seed.  Datasets persist to a
simple binary format: one text header line (type strings, count, seed)
followed by the float64 input matrix and the float64 target matrix,
row-major; a CSV export mirrors the same layout for inspection.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .groups import Family, GroupSpec, metric_signs, parse_group
from .repalgebra import TensorType, TypedFeature

ELECTRON_MASS = 0.0
MUON_MASS = 0.106  # natural units
SOFTENING = 0.1


@dataclass
class Dataset:
    group: GroupSpec
    seed: int
    task: str
    input_type: TensorType
    target_type: TensorType
    inputs: list[TypedFeature]
    targets: list[TypedFeature]

    def __len__(self) -> int:
        return len(self.inputs)

    def stacked_inputs(self) -> dict[int, np.ndarray]:
        """Batched blocks in model layout: order -> (count, d**m, channels)."""
        orders = self.input_type.orders
        return {m: np.ascontiguousarray(
                    np.stack([f.block(m) for f in self.inputs]).transpose(0, 2, 1))
                for m in orders}

    def stacked_targets(self) -> np.ndarray:
        m = max(self.target_type.orders)
        return np.ascontiguousarray(
            np.stack([f.block(m) for f in self.targets]).transpose(0, 2, 1))

    def slice(self, start: int, stop: int) -> "Dataset":
        return Dataset(self.group, self.seed, self.task, self.input_type,
                       self.target_type, self.inputs[start:stop],
                       self.targets[start:stop])


@dataclass
class Trajectory:
    charges: np.ndarray      # (N,) in {-1, +1}
    positions: np.ndarray    # (steps + 1, N, 3)
    velocities: np.ndarray   # (steps + 1, N, 3)


@dataclass
class RegularDataset:
    group_size: int
    seed: int
    payloads: np.ndarray     # (count, |G|, features)
    labels: np.ndarray       # (count,) integer classes
    classes: int

    def __len__(self) -> int:
        return len(self.labels)


def _feature(type_str: str, d: int, blocks: dict[int, np.ndarray]) -> TypedFeature:
    return TypedFeature(TensorType.parse(type_str), d, blocks)


def o5_target(x1: np.ndarray, x2: np.ndarray) -> float:
    n1, n2 = np.linalg.norm(x1), np.linalg.norm(x2)
    return float(np.sin(n1) - n2**3 / 2.0 + x1 @ x2 / (n1 * n2))


def gen_o5(count: int, seed: int) -> Dataset:
    """O(5)-invariant regression: two standard-normal vectors in R^5."""
    rng = np.random.default_rng(seed)
    inputs, targets = [], []
    while len(inputs) < count:
        x = rng.standard_normal((2, 5))
        if min(np.linalg.norm(x[0]), np.linalg.norm(x[1])) < 1e-6:
            continue
        inputs.append(_feature("2T1", 5, {1: x}))
        targets.append(_feature("T0", 5, {0: np.array([[o5_target(x[0], x[1])]])}))
    return Dataset(parse_group("O(5)"), seed, "o5", TensorType.parse("2T1"),
                   TensorType.parse("T0"), inputs, targets)


def inertia_matrix(masses: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Moment-of-inertia matrix of point masses about the origin."""
    r2 = np.sum(positions * positions, axis=1)
    eye = np.eye(3)
    return sum(m * (r2_i * eye - np.outer(x, x))
               for m, r2_i, x in zip(masses, r2, positions))


def gen_inertia(count: int, seed: int) -> Dataset:
    """O(3)-equivariant regression: 5 masses and positions -> inertia matrix."""
    rng = np.random.default_rng(seed)
    inputs, targets = [], []
    for _ in range(count):
        masses = rng.uniform(0.1, 2.0, size=5)
        pos = rng.standard_normal((5, 3))
        inputs.append(_feature("5T0+5T1", 3, {0: masses[:, None], 1: pos}))
        targets.append(_feature("T2", 3,
                                {2: inertia_matrix(masses, pos).reshape(1, 9)}))
    return Dataset(parse_group("O(3)"), seed, "inertia", TensorType.parse("5T0+5T1"),
                   TensorType.parse("T2"), inputs, targets)


def minkowski_dot(p: np.ndarray, q: np.ndarray) -> float:
    return float(p[0] * q[0] - p[1:] @ q[1:])


def matrix_element(p1, p2, p3, p4) -> float:
    """Spin-averaged squared amplitude for elastic electron-muon scattering.

    Tree-level photon exchange with unit coupling:
        (8 / t^2) * [ (p1.p2)(p3.p4) + (p1.p4)(p2.p3)
                      - m_mu^2 (p1.p3) - m_e^2 (p2.p4) + 2 m_e^2 m_mu^2 ]
    where t = (p1 - p3)^2 and all dots are Minkowski.
    """
    t = minkowski_dot(p1 - p3, p1 - p3)
    me2, mm2 = ELECTRON_MASS**2, MUON_MASS**2
    val = (minkowski_dot(p1, p2) * minkowski_dot(p3, p4)
           + minkowski_dot(p1, p4) * minkowski_dot(p2, p3)
           - mm2 * minkowski_dot(p1, p3) - me2 * minkowski_dot(p2, p4)
           + 2.0 * me2 * mm2)
    return 8.0 * val / t**2


def matrix_element_from_dots(dots: dict[tuple[int, int], float]) -> float:
    """Same amplitude computed only from the pairwise Minkowski dots."""
    t = dots[(0, 0)] - 2.0 * dots[(0, 2)] + dots[(2, 2)]
    me2 = dots[(0, 0)]
    mm2 = dots[(1, 1)]
    val = (dots[(0, 1)] * dots[(2, 3)] + dots[(0, 3)] * dots[(1, 2)]
           - mm2 * dots[(0, 2)] - me2 * dots[(1, 3)] + 2.0 * me2 * mm2)
    return 8.0 * val / t**2


def _unit_sphere(rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


def _random_lorentz(rng: np.random.Generator, max_rapidity: float = 1.0) -> np.ndarray:
    from .groups import boost_matrix, _haar_orthogonal

    rot = np.eye(4)
    rot[1:, 1:] = _haar_orthogonal(rng, 3)
    return boost_matrix(4, _unit_sphere(rng), rng.uniform(-max_rapidity, max_rapidity)) @ rot


def sample_scattering_momenta(rng: np.random.Generator) -> np.ndarray:
    """Elastic e-mu kinematics: CM config at a random angle, randomly boosted.

    CM momentum is uniform in [0.5, 1.0] and the scattering angle satisfies
    cos(theta) <= 0.5, keeping |t| bounded away from zero so the amplitude
    stays in a sane range.
    """
    while True:
        p = rng.uniform(0.5, 1.0)
        n_in = _unit_sphere(rng)
        n_out = _unit_sphere(rng)
        if n_in @ n_out > 0.5:
            continue
        e_e = np.hypot(p, ELECTRON_MASS)
        e_m = np.hypot(p, MUON_MASS)
        p1 = np.array([e_e, *(p * n_in)])
        p2 = np.array([e_m, *(-p * n_in)])
        p3 = np.array([e_e, *(p * n_out)])
        p4 = np.array([e_m, *(-p * n_out)])
        if abs(minkowski_dot(p1 - p3, p1 - p3)) < 1e-8:
            continue
        lam = _random_lorentz(rng)
        return np.stack([p1, p2, p3, p4]) @ lam.T


def gen_scattering(count: int, seed: int) -> Dataset:
    """Lorentz-invariant regression: four on-shell momenta -> amplitude."""
    rng = np.random.default_rng(seed)
    inputs, targets = [], []
    for _ in range(count):
        p = sample_scattering_momenta(rng)
        inputs.append(_feature("4T1", 4, {1: p}))
        targets.append(_feature("T0", 4,
                                {0: np.array([[matrix_element(*p)]])}))
    return Dataset(parse_group("O(1,3)"), seed, "scattering", TensorType.parse("4T1"),
                   TensorType.parse("T0"), inputs, targets)


def coulomb_accelerations(pos: np.ndarray, charges: np.ndarray) -> np.ndarray:
    """Pairwise softened Coulomb forces on unit masses: (..., N, 3) -> same."""
    diff = pos[..., :, None, :] - pos[..., None, :, :]
    r2 = np.sum(diff * diff, axis=-1) + SOFTENING**2
    inv = r2 ** (-1.5)
    qq = charges[..., :, None] * charges[..., None, :]
    np.einsum("...ii->...i", inv)[...] = 0.0
    return np.sum((qq * inv)[..., None] * diff, axis=-2)


def simulate_nbody(charges: np.ndarray, pos0: np.ndarray, vel0: np.ndarray,
                   steps: int, dt: float):
    """Leapfrog (kick-drift-kick) integration; returns full paths."""
    pos = np.empty((steps + 1, *pos0.shape))
    vel = np.empty((steps + 1, *vel0.shape))
    pos[0], vel[0] = pos0, vel0
    acc = coulomb_accelerations(pos0, charges)
    x, v = pos0.copy(), vel0.copy()
    for t in range(steps):
        v_half = v + 0.5 * dt * acc
        x = x + dt * v_half
        acc = coulomb_accelerations(x, charges)
        v = v_half + 0.5 * dt * acc
        pos[t + 1], vel[t + 1] = x, v
    return pos, vel


def gen_nbody(trajectories: int, steps: int = 500, dt: float = 1e-3,
              seed: int = 0, n_particles: int = 5):
    """Charged N-body rollouts; dataset maps initial state to final positions.

    Input features are 5 charge scalars plus 10 vectors (positions then
    velocities); targets are the 5 final positions.
    """
    rng = np.random.default_rng(seed)
    charges = rng.choice([-1.0, 1.0], size=(trajectories, n_particles))
    pos0 = rng.standard_normal((trajectories, n_particles, 3))
    vel0 = rng.standard_normal((trajectories, n_particles, 3)) * 0.5
    pos, vel = simulate_nbody(charges, pos0, vel0, steps, dt)

    trajs, inputs, targets = [], [], []
    in_type = f"{n_particles}T0+{2 * n_particles}T1"
    for k in range(trajectories):
        trajs.append(Trajectory(charges[k], pos[:, k], vel[:, k]))
        vecs = np.concatenate([pos0[k], vel0[k]], axis=0)
        inputs.append(_feature(in_type, 3, {0: charges[k][:, None], 1: vecs}))
        targets.append(_feature(f"{n_particles}T1", 3, {1: pos[-1, k]}))
    ds = Dataset(parse_group("O(3)"), seed, "nbody", TensorType.parse(in_type),
                 TensorType.parse(f"{n_particles}T1"), inputs, targets)
    return trajs, ds


def _necklace_orders(group_size: int, classes: int, rng: np.random.Generator):
    """Distinct cyclic orderings of the slice indices, first index pinned.

    Pinning index 0 quotients out rotations, so any two orderings here are
    genuinely different necklaces.
    """
    orders, seen = [], set()
    while len(orders) < classes:
        perm = (0, *map(int, rng.permutation(np.arange(1, group_size))))
        if perm not in seen:
            seen.add(perm)
            orders.append(np.array(perm))
    return orders


def gen_rot_patterns(count: int, group_size: int, seed: int,
                     features: int = 16, classes: int = 4,
                     noise: float = 0.25) -> RegularDataset:
    """Cyclic-pattern classification over a group axis.

    One pool of random letter vectors is shared by every class; a class is a
    necklace (cyclic ordering) of the pool, and a sample is a random cyclic
    shift of its class ordering plus noise.  Labels are invariant to shifts
    by construction, and because all classes share the same slice multiset,
    shuffling the group axis destroys the class signal entirely: only the
    cyclic order carries information.

    For group size 2 all orderings are rotations of each other, so classes
    fall back to disjoint letter pairs (a multiset signal).
    """
    if group_size not in (2, 4, 8):
        raise ValueError(f"group size must be 2, 4 or 8, got {group_size}")
    import math

    if group_size > 2 and classes > math.factorial(group_size - 1):
        raise ValueError(f"at most {math.factorial(group_size - 1)} distinct "
                         f"necklaces exist for group size {group_size}")
    rng = np.random.default_rng(seed)
    if group_size == 2:
        letters = rng.standard_normal((classes, 2, features))
        orders = [np.arange(2)] * classes
        protos = letters
    else:
        letters = rng.standard_normal((group_size, features))
        orders = _necklace_orders(group_size, classes, rng)
        protos = np.stack([letters[o] for o in orders])

    labels = rng.integers(classes, size=count)
    shifts = rng.integers(group_size, size=count)
    payloads = np.empty((count, group_size, features))
    for k in range(count):
        rolled = np.roll(protos[labels[k]], shifts[k], axis=0)
        payloads[k] = rolled + noise * rng.standard_normal((group_size, features))
    return RegularDataset(group_size, seed, payloads, labels.astype(np.int64), classes)


# -- persistence --


def save_dataset(ds: Dataset, path: str | Path) -> None:
    header = (f"equireps-dataset task={ds.task} group={ds.group} "
              f"input={ds.input_type} target={ds.target_type} "
              f"count={len(ds)} seed={ds.seed}\n")
    ins = np.stack([f.ravel() for f in ds.inputs])
    tgts = np.stack([f.ravel() for f in ds.targets])
    with open(path, "wb") as fh:
        fh.write(header.encode())
        fh.write(ins.astype(np.float64).tobytes())
        fh.write(tgts.astype(np.float64).tobytes())


def load_dataset(path: str | Path) -> Dataset:
    with open(path, "rb") as fh:
        header = fh.readline().decode().strip()
        payload = np.frombuffer(fh.read(), dtype=np.float64)
    fields = dict(kv.split("=", 1) for kv in header.split()[1:])
    group = parse_group(fields["group"])
    in_type = TensorType.parse(fields["input"])
    tgt_type = TensorType.parse(fields["target"])
    count = int(fields["count"])
    in_len = in_type.payload_length(group.d)
    tgt_len = tgt_type.payload_length(group.d)
    ins = payload[: count * in_len].reshape(count, in_len)
    tgts = payload[count * in_len:].reshape(count, tgt_len)
    inputs = [TypedFeature.from_ravel(in_type, group.d, row) for row in ins]
    targets = [TypedFeature.from_ravel(tgt_type, group.d, row) for row in tgts]
    return Dataset(group, int(fields["seed"]), fields["task"], in_type, tgt_type,
                   inputs, targets)


def dataset_to_csv(ds: Dataset, path: str | Path) -> None:
    ins = np.stack([f.ravel() for f in ds.inputs])
    tgts = np.stack([f.ravel() for f in ds.targets])
    cols = [f"in_{i}" for i in range(ins.shape[1])] + [f"tgt_{i}" for i in range(tgts.shape[1])]
    table = np.concatenate([ins, tgts], axis=1)
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in table:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def save_regular_dataset(ds: RegularDataset, path: str | Path) -> None:
    header = (f"equireps-regular-dataset group_size={ds.group_size} "
              f"features={ds.payloads.shape[2]} classes={ds.classes} "
              f"count={len(ds)} seed={ds.seed}\n")
    with open(path, "wb") as fh:
        fh.write(header.encode())
        fh.write(ds.payloads.astype(np.float64).tobytes())
        fh.write(ds.labels.astype(np.float64).tobytes())


def load_regular_dataset(path: str | Path) -> RegularDataset:
    with open(path, "rb") as fh:
        header = fh.readline().decode().strip()
        payload = np.frombuffer(fh.read(), dtype=np.float64)
    fields = dict(kv.split("=", 1) for kv in header.split()[1:])
    n, feats = int(fields["group_size"]), int(fields["features"])
    count = int(fields["count"])
    body = payload[: count * n * feats].reshape(count, n, feats)
    labels = payload[count * n * feats:].astype(np.int64)
    return RegularDataset(n, int(fields["seed"]), body.copy(), labels, int(fields["classes"]))
