"""Run configuration, training loop, metrics, checkpoints, audits, benchmarks.

Config files are flat ``key = value`` text; CLI flags override file keys.
Metrics go to a CSV with the fixed header
``epoch,train_loss,test_loss,epoch_time_seconds,lr``.  Checkpoints are one
text header line (the model spec string) followed by the flat float64
parameter payload in declaration order.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import tasks as task_gen
from .autodiff import Value
from .gnn import EquivariantGNN, PlainMPNN, gnn_equivariance_violation
from .groups import Family, GroupSpec, parse_group, sample_element
from .layers import ModelSpec
from .models import (MLP, build_o3_model, build_o5_model, build_o13_model,
                     build_task_mlp, count_params, equivariance_violation)
from .regular import FlatClassifier, WrappedClassifier
from .universal import ScalarInvariantModel, VectorEquivariantModel

COMPAT = {
    "o5": {"grepsnet", "mlp", "universal_scalar"},
    "inertia": {"grepsnet", "mlp"},
    "scattering": {"grepsnet", "mlp", "universal_scalar"},
    "nbody": {"grepsgnn", "mpnn", "universal_vector"},
    "rotpat": {"grepsnet", "mlp"},
}

TASK_GROUPS = {
    "o5": "O(5)",
    "inertia": "O(3)",
    "scattering": "O(1,3)",
    "nbody": "O(3)",
    "rotpat": "C4",
}

# full batch for the small regression tasks, minibatches elsewhere
DEFAULT_BATCH = {"o5": 0, "inertia": 0, "scattering": 0, "nbody": 64, "rotpat": 64}


@dataclass
class RunConfig:
    task: str = ""
    model: str = ""
    group: str = ""
    channels: int = 32
    epochs: int = 100
    lr: float = 3e-3
    optimizer: str = "adam"
    momentum: float = 0.9
    scheduler: str = "none"
    scheduler_step: int = 7
    scheduler_gamma: float = 0.1
    seed: int = 0
    train_size: int = 1000
    test_size: int = 500
    batch_size: int = -1          # -1: per-task default
    metrics_csv: str = "metrics.csv"
    checkpoint: str = "model.ckpt"
    nbody_steps: int = 500
    nbody_dt: float = 1e-3
    rotpat_features: int = 16
    rotpat_classes: int = 4

    def validate(self) -> None:
        if self.task not in COMPAT:
            raise ValueError(f"unknown task {self.task!r}; choose from {sorted(COMPAT)}")
        if self.model not in COMPAT[self.task]:
            raise ValueError(
                f"model {self.model!r} is not valid for task {self.task!r}; "
                f"allowed: {sorted(COMPAT[self.task])}"
            )
        group = parse_group(self.group or TASK_GROUPS[self.task])
        if self.task == "rotpat":
            if group.family is not Family.CYCLIC or group.n not in (2, 4, 8):
                raise ValueError("rotpat needs a cyclic group C2, C4 or C8")
        elif str(group) != TASK_GROUPS[self.task]:
            raise ValueError(f"task {self.task!r} runs on {TASK_GROUPS[self.task]}, "
                             f"got {group}")
        if self.epochs < 1 or self.train_size < 1 or self.test_size < 1:
            raise ValueError("epochs and data sizes must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.scheduler not in ("none", "steplr"):
            raise ValueError(f"unknown scheduler {self.scheduler!r}")

    @property
    def group_spec(self) -> GroupSpec:
        return parse_group(self.group or TASK_GROUPS[self.task])

    @property
    def effective_batch(self) -> int:
        return DEFAULT_BATCH[self.task] if self.batch_size < 0 else self.batch_size


_BOOL = {"true": True, "false": False}


def parse_config(path: str | Path) -> RunConfig:
    cfg = RunConfig()
    text = Path(path).read_text()
    known = {f.name: f.type for f in fields(RunConfig)}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        cfg = replace(cfg, **{key: _coerce(key, val)})
    return cfg


def _coerce(key: str, val: str):
    current = getattr(RunConfig(), key)
    if isinstance(current, bool):
        return _BOOL[val.lower()]
    if isinstance(current, int):
        return int(val)
    if isinstance(current, float):
        return float(val)
    return val


@dataclass
class MetricsRow:
    epoch: int
    train_loss: float
    test_loss: float
    epoch_time_seconds: float
    lr: float


def write_metrics(rows: list[MetricsRow], path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,train_loss,test_loss,epoch_time_seconds,lr\n")
        for r in rows:
            fh.write(f"{r.epoch},{r.train_loss:.17g},{r.test_loss:.17g},"
                     f"{r.epoch_time_seconds:.6f},{r.lr:.17g}\n")


# -- problems: data plus model glue per task --


class TensorProblem:
    """Shared handling for the o5 / inertia / scattering regressions.

    Targets are standardized on the train split for optimization; all
    reported losses are in raw target units.  Higher-order targets are only
    rescaled, never shifted: subtracting a non-invariant constant would
    break the correspondence with equivariant predictors.
    """

    GENS = {"o5": task_gen.gen_o5, "inertia": task_gen.gen_inertia,
            "scattering": task_gen.gen_scattering}

    def __init__(self, cfg: RunConfig):
        ds = self.GENS[cfg.task](cfg.train_size + cfg.test_size, cfg.seed)
        train, test = ds.slice(0, cfg.train_size), ds.slice(cfg.train_size, len(ds))
        self.train_in = train.stacked_inputs()
        self.train_tgt = train.stacked_targets()
        self.test_in = test.stacked_inputs()
        self.test_tgt = test.stacked_targets()
        self.n_train = cfg.train_size
        invariant_target = max(ds.target_type.orders) == 0
        self.shift = float(self.train_tgt.mean()) if invariant_target else 0.0
        self.scale = float(self.train_tgt.std()) or 1.0

    def batch(self, idx: np.ndarray):
        return {m: x[idx] for m, x in self.train_in.items()}, self.train_tgt[idx]

    def loss(self, model, blocks, target) -> Value:
        # standardized-unit loss; exact raw-unit value is loss * scale**2
        std_target = (target - self.shift) / self.scale
        return ad.mse(model.forward(blocks), std_target)

    def loss_unit_factor(self) -> float:
        return self.scale**2

    def predict(self, model, blocks) -> np.ndarray:
        return model.forward(blocks).data * self.scale + self.shift

    def test_loss(self, model) -> float:
        return float(np.mean((self.predict(model, self.test_in) - self.test_tgt) ** 2))


class NBodyProblem:
    def __init__(self, cfg: RunConfig):
        total = cfg.train_size + cfg.test_size
        _, ds = task_gen.gen_nbody(total, cfg.nbody_steps, cfg.nbody_dt, cfg.seed)
        ins = ds.stacked_inputs()
        charges = ins[0][:, 0, :]
        pos = ins[1].transpose(0, 2, 1)[:, :5]
        vel = ins[1].transpose(0, 2, 1)[:, 5:]
        tgt = ds.stacked_targets().transpose(0, 2, 1)  # (count, nodes, 3)
        k = cfg.train_size
        self.train = (pos[:k], vel[:k], charges[:k], tgt[:k])
        self.test = (pos[k:], vel[k:], charges[k:], tgt[k:])
        self.n_train = k

    def batch(self, idx: np.ndarray):
        pos, vel, q, tgt = self.train
        return (pos[idx], vel[idx], q[idx]), tgt[idx]

    def loss(self, model, inputs, target) -> Value:
        return ad.mse(self._predict(model, inputs), target)

    @staticmethod
    def _predict(model, inputs) -> Value:
        pos, vel, q = inputs
        if isinstance(model, VectorEquivariantModel):
            vecs = np.concatenate([pos, vel], axis=1).transpose(0, 2, 1)  # (B, 3, 10)
            return ad.swap_last2(model.forward({1: vecs}, extra_scalars=q))
        return model.forward(pos, vel, q)

    def loss_unit_factor(self) -> float:
        return 1.0

    def test_loss(self, model) -> float:
        pos, vel, q, tgt = self.test
        return ad.mse(self._predict(model, (pos, vel, q)), tgt).item()


class RotPatProblem:
    """Cyclic-pattern classification; the MLP baseline sees shuffled slices."""

    def __init__(self, cfg: RunConfig):
        n = cfg.group_spec.n
        ds = task_gen.gen_rot_patterns(cfg.train_size + cfg.test_size, n, cfg.seed,
                                       features=cfg.rotpat_features,
                                       classes=cfg.rotpat_classes)
        payloads, labels = ds.payloads, ds.labels
        if cfg.model == "mlp":
            rng = np.random.default_rng(cfg.seed + 1)
            payloads = payloads.copy()
            for k in range(len(payloads)):
                payloads[k] = payloads[k][rng.permutation(n)]
        onehot = np.zeros((len(labels), 1, ds.classes))
        onehot[np.arange(len(labels)), 0, labels] = 1.0
        k = cfg.train_size
        self.train = (payloads[:k], onehot[:k], labels[:k])
        self.test = (payloads[k:], onehot[k:], labels[k:])
        self.n_train = k

    def batch(self, idx: np.ndarray):
        return self.train[0][idx], self.train[1][idx]

    def loss(self, model, payload, onehot) -> Value:
        return ad.mse(model.forward(payload), onehot)

    def loss_unit_factor(self) -> float:
        return 1.0

    def test_loss(self, model) -> float:
        return ad.mse(model.forward(self.test[0]), self.test[1]).item()

    def accuracy(self, model, split: str = "test") -> float:
        payload, _, labels = self.test if split == "test" else self.train
        logits = model.forward(payload).data[:, 0, :]
        return float(np.mean(np.argmax(logits, axis=1) == labels))


def make_problem(cfg: RunConfig):
    if cfg.task in TensorProblem.GENS:
        return TensorProblem(cfg)
    if cfg.task == "nbody":
        return NBodyProblem(cfg)
    return RotPatProblem(cfg)


def build_model(cfg: RunConfig):
    c, seed = cfg.channels, cfg.seed
    if cfg.task in TensorProblem.GENS:
        if cfg.model == "grepsnet":
            builder = {"o5": build_o5_model, "inertia": build_o3_model,
                       "scattering": build_o13_model}[cfg.task]
            return builder(channels=c, seed=seed)
        if cfg.model == "mlp":
            return build_task_mlp(cfg.task, width=c, seed=seed)
        n = {"o5": 2, "scattering": 4}[cfg.task]
        return ScalarInvariantModel(cfg.group_spec, n=n, hidden=c, seed=seed)
    if cfg.task == "nbody":
        if cfg.model == "grepsgnn":
            return EquivariantGNN(channels=c, seed=seed)
        if cfg.model == "mpnn":
            return PlainMPNN(width=c, seed=seed)
        return VectorEquivariantModel(parse_group("O(3)"), n=10, n_outputs=5,
                                      hidden=c, n_extra=5, seed=seed)
    n = cfg.group_spec.n
    if cfg.model == "grepsnet":
        return WrappedClassifier(n, cfg.rotpat_features, cfg.rotpat_classes,
                                 hidden=c, seed=seed)
    return FlatClassifier(n, cfg.rotpat_features, cfg.rotpat_classes,
                          hidden=c, seed=seed)


def _rebuild_from_spec(spec: ModelSpec, cfg: RunConfig | None = None):
    kind, task = spec.kind, spec.task
    if kind == "grepsnet" and task in TensorProblem.GENS:
        builder = {"o5": build_o5_model, "inertia": build_o3_model,
                   "scattering": build_o13_model}[task]
        return builder(channels=spec.channels)
    if kind == "mlp" and task in TensorProblem.GENS:
        return build_task_mlp(task, width=spec.channels, n_layers=spec.layers)
    if kind == "grepsgnn":
        return EquivariantGNN(channels=spec.channels, n_layers=spec.layers)
    if kind == "mpnn":
        return PlainMPNN(width=spec.channels, n_layers=spec.layers)
    if kind == "universal_scalar":
        return ScalarInvariantModel(spec.group, n=spec.input_type.multiplicity(1),
                                    hidden=spec.channels, depth=spec.layers - 1)
    if kind == "universal_vector":
        n_extra = 5 if task == "nbody" else 0
        return VectorEquivariantModel(spec.group, n=spec.input_type.multiplicity(1),
                                      n_outputs=spec.output_type.multiplicity(1),
                                      hidden=spec.channels, depth=spec.layers - 1,
                                      n_extra=n_extra)
    if task == "rotpat":
        feats = spec.input_type.multiplicity(0)
        classes = spec.output_type.multiplicity(0)
        cls = WrappedClassifier if kind == "grepsnet" else FlatClassifier
        return cls(spec.group.n, feats, classes, hidden=spec.channels)
    raise ValueError(f"cannot rebuild model kind={kind!r} task={task!r}")


def model_spec_for(cfg: RunConfig, model) -> ModelSpec:
    if hasattr(model, "spec"):
        return model.spec
    # wrapped / flat classifiers carry no spec of their own
    from .repalgebra import TensorType

    return ModelSpec(cfg.model, "rotpat", cfg.group_spec,
                     TensorType.of((cfg.rotpat_features, 0)),
                     TensorType.of((cfg.channels, 0)),
                     TensorType.of((cfg.rotpat_classes, 0)),
                     cfg.channels, 3)


def save_checkpoint(path: str | Path, spec: ModelSpec, params) -> None:
    flat = np.concatenate([p.data.ravel() for p in params])
    with open(path, "wb") as fh:
        fh.write((spec.to_string() + "\n").encode())
        fh.write(flat.astype(np.float64).tobytes())


def load_checkpoint(path: str | Path):
    with open(path, "rb") as fh:
        spec = ModelSpec.from_string(fh.readline().decode().strip())
        flat = np.frombuffer(fh.read(), dtype=np.float64)
    model = _rebuild_from_spec(spec)
    set_flat_params(model, flat)
    return model, spec


def set_flat_params(model, flat: np.ndarray) -> None:
    at = 0
    for p in model.params:
        n = p.data.size
        p.data = flat[at: at + n].reshape(p.data.shape).copy()
        at += n
    if at != flat.size:
        raise ValueError(f"checkpoint has {flat.size} params, model wants {at}")


def make_optimizer(cfg: RunConfig, params):
    sched = (ad.StepLR(cfg.scheduler_step, cfg.scheduler_gamma)
             if cfg.scheduler == "steplr" else None)
    if cfg.optimizer == "sgd":
        return ad.SGD(params, lr=cfg.lr, momentum=cfg.momentum, scheduler=sched)
    return ad.Adam(params, lr=cfg.lr, scheduler=sched)


def train(cfg: RunConfig, quiet: bool = True):
    """Train per config; returns (metrics rows, model). Writes CSV + checkpoint."""
    cfg.validate()
    problem = make_problem(cfg)
    model = build_model(cfg)
    opt = make_optimizer(cfg, model.params)
    rng = np.random.default_rng(cfg.seed + 17)
    batch = cfg.effective_batch or problem.n_train

    rows: list[MetricsRow] = []
    best = (np.inf, None)
    for epoch in range(cfg.epochs):
        opt.set_epoch(epoch)
        order = rng.permutation(problem.n_train)
        epoch_loss, seen = 0.0, 0
        t0 = time.perf_counter()
        for at in range(0, problem.n_train, batch):
            idx = order[at: at + batch]
            inputs, target = problem.batch(idx)
            loss = problem.loss(model, inputs, target)
            if not np.isfinite(loss.data):
                bad = ad.first_nonfinite_op(loss)
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch}; first offending op: {bad}")
            ad.zero_grad(model.params)
            loss.backward()
            opt.step()
            epoch_loss += loss.item() * problem.loss_unit_factor() * len(idx)
            seen += len(idx)
        epoch_time = time.perf_counter() - t0
        test_loss = problem.test_loss(model)
        rows.append(MetricsRow(epoch, epoch_loss / seen, test_loss, epoch_time, opt.lr))
        if test_loss < best[0]:
            best = (test_loss, np.concatenate([p.data.ravel() for p in model.params]))
        if not quiet and (epoch % 10 == 0 or epoch == cfg.epochs - 1):
            print(f"epoch {epoch:4d}  train {rows[-1].train_loss:.6g}  "
                  f"test {test_loss:.6g}  lr {opt.lr:g}")

    if best[1] is not None:
        set_flat_params(model, best[1])
    if cfg.metrics_csv:
        write_metrics(rows, cfg.metrics_csv)
    if cfg.checkpoint:
        save_checkpoint(cfg.checkpoint, model_spec_for(cfg, model), model.params)
    return rows, model


# -- equivariance audits --


def _audit_inputs(task: str, rng: np.random.Generator, batch: int = 4):
    if task == "o5":
        return {1: rng.standard_normal((batch, 5, 2))}
    if task == "inertia":
        return {0: rng.uniform(0.1, 2.0, (batch, 1, 5)),
                1: rng.standard_normal((batch, 3, 5))}
    if task == "scattering":
        return {1: rng.standard_normal((batch, 4, 4))}
    raise ValueError(f"no tensor audit inputs for task {task!r}")


def audit_model(model, task: str, group: GroupSpec, trials: int,
                fresh_weights: bool = False, channels: int | None = None,
                kind: str = "grepsnet") -> float:
    """Max relative equivariance violation over (weights, input, g) triples."""
    worst = 0.0
    for trial in range(trials):
        rng = np.random.default_rng(1000 + trial)
        g = sample_element(group, 2000 + trial)
        if task == "nbody":
            mdl = EquivariantGNN(channels=channels or 8, seed=trial) if fresh_weights else model
            pos = rng.standard_normal((2, 5, 3))
            vel = rng.standard_normal((2, 5, 3))
            q = rng.choice([-1.0, 1.0], (2, 5))
            v = gnn_equivariance_violation(mdl, pos, vel, q, g)
        elif task == "rotpat":
            mdl = model
            payload = rng.standard_normal((2, group.n, 16))
            base = mdl.forward(payload).data
            shifted = mdl.forward(np.roll(payload, 1 + trial % group.n, axis=1)).data
            v = float(np.linalg.norm(shifted - base) / (1.0 + np.linalg.norm(base)))
        else:
            if fresh_weights:
                sub = replace(RunConfig(), task=task, model=kind, seed=trial,
                              channels=channels or 16)
                mdl = build_model(sub)
            else:
                mdl = model
            blocks = _audit_inputs(task, rng)
            v = equivariance_violation(mdl, blocks, g)
        worst = max(worst, v)
    return worst


# -- timing bench and comparisons --


def bench(task: str, kinds: list[str], channels: int, train_size: int = 1000,
          epochs_timed: int = 5, warmup: int = 2, seed: int = 0) -> dict[str, float]:
    """Median seconds per training epoch at matched channel width.

    Epochs of the benched models are interleaved so every model sees the
    same machine contention, and each model's time is the fastest of
    ``epochs_timed`` samples taken after ``warmup`` untimed epochs: under
    noisy-neighbor contention the minimum tracks the uncontended epoch cost
    far more stably than the median.
    """
    runs = []
    for kind in kinds:
        cfg = RunConfig(task=task, model=kind, channels=channels, seed=seed,
                        epochs=1, train_size=train_size,
                        test_size=max(2, train_size // 10),
                        metrics_csv="", checkpoint="")
        cfg.validate()
        problem = make_problem(cfg)
        model = build_model(cfg)
        opt = make_optimizer(cfg, model.params)
        runs.append((kind, problem, model, opt))

    samples: dict[str, list[float]] = {kind: [] for kind in kinds}
    rng = np.random.default_rng(seed + 17)
    for epoch in range(warmup + epochs_timed):
        for kind, problem, model, opt in runs:
            order = rng.permutation(problem.n_train)
            batch = DEFAULT_BATCH[task] or problem.n_train
            t0 = time.perf_counter()
            for at in range(0, problem.n_train, batch):
                idx = order[at: at + batch]
                inputs, target = problem.batch(idx)
                loss = problem.loss(model, inputs, target)
                ad.zero_grad(model.params)
                loss.backward()
                opt.step()
            if epoch >= warmup:
                samples[kind].append(time.perf_counter() - t0)
    return {kind: float(np.min(ts)) for kind, ts in samples.items()}


def compare(cfg_a: RunConfig, cfg_b: RunConfig, sizes: list[int] | None = None) -> str:
    """Loss and epoch-time ratios between two configs on the same task/seed."""
    if cfg_a.task != cfg_b.task or cfg_a.seed != cfg_b.seed:
        raise ValueError("compare needs matching task and seed")
    if (cfg_a.train_size, cfg_a.test_size) != (cfg_b.train_size, cfg_b.test_size):
        raise ValueError("compare needs matching data sizes")
    sizes = sizes or [cfg_a.train_size]
    lines = [f"task={cfg_a.task} seed={cfg_a.seed} "
             f"models: A={cfg_a.model}(c={cfg_a.channels}) "
             f"B={cfg_b.model}(c={cfg_b.channels})",
             "size,test_loss_A,test_loss_B,loss_ratio_A_over_B,epoch_time_ratio_A_over_B"]
    for size in sizes:
        a = replace(cfg_a, train_size=size, metrics_csv="", checkpoint="")
        b = replace(cfg_b, train_size=size, metrics_csv="", checkpoint="")
        rows_a, _ = train(a)
        rows_b, _ = train(b)
        loss_a = min(r.test_loss for r in rows_a)
        loss_b = min(r.test_loss for r in rows_b)
        t_a = float(np.median([r.epoch_time_seconds for r in rows_a[2:]] or [rows_a[-1].epoch_time_seconds]))
        t_b = float(np.median([r.epoch_time_seconds for r in rows_b[2:]] or [rows_b[-1].epoch_time_seconds]))
        lines.append(f"{size},{loss_a:.6g},{loss_b:.6g},{loss_a / loss_b:.4g},{t_a / t_b:.4g}")
    return "\n".join(lines)
