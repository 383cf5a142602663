"""Three-layer sigmoid classifier with per-sample gradient training.

The serial backend here is the reference implementation: a Python loop over
samples calling the shared row kernels over full ranges. Training repeats
passes over the data in one fixed, seeded order until the epoch MSE (mean
over samples and output neurons of the pre-update squared errors) reaches
the target or the epoch cap. Given identical seed, config, and data, results
are bit-reproducible.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .exceptions import DimensionError, EmptyDataset, ParseError, RangeError


def sigmoid(x):
    """Logistic function 1/(1 + e^-x); accepts scalars or arrays."""
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


# ---------------------------------------------------------------------------
# Labels


@dataclass(frozen=True)
class LabelCode:
    class_id: int
    bits: tuple  # most-significant bit first


def encode_label(class_id: int, o: int) -> LabelCode:
    if not 0 <= class_id < 2 ** o:
        raise RangeError(f"class id {class_id} does not fit in {o} bits")
    bits = tuple((class_id >> (o - 1 - j)) & 1 for j in range(o))
    return LabelCode(class_id, bits)


def decode_label(bits) -> int:
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    return value


# ---------------------------------------------------------------------------
# Model


@dataclass
class BpnnModel:
    n: int
    h: int
    o: int
    w1: np.ndarray          # (h, n), w1[i, k] = weight from input k to hidden i
    b1: np.ndarray          # (h,)
    w2: np.ndarray          # (o, h)
    b2: np.ndarray          # (o,)
    use_bias: bool = True
    scale_min: np.ndarray | None = None  # per-input affine rescale to [0, 1]
    scale_max: np.ndarray | None = None
    classes: int | None = None           # enrolled class count; None -> 2**o

    def __post_init__(self):
        if self.w1.shape != (self.h, self.n) or self.w2.shape != (self.o, self.h):
            raise DimensionError("weight matrix shapes inconsistent with n, h, o")
        if self.b1.shape != (self.h,) or self.b2.shape != (self.o,):
            raise DimensionError("bias vector shapes inconsistent with h, o")
        if self.scale_min is None:
            self.scale_min = np.zeros(self.n)
        if self.scale_max is None:
            self.scale_max = np.ones(self.n)

    @classmethod
    def initialize(cls, n: int, h: int, o: int, seed: int = 0,
                   use_bias: bool = True) -> "BpnnModel":
        """Fresh model, weights uniform in [-0.5, 0.5] from the seeded generator.

        Draw order is w1, b1, w2, b2; disabling biases zeroes them after
        drawing so the weight stream matches between modes.
        """
        rng = np.random.default_rng(seed)
        w1 = rng.uniform(-0.5, 0.5, (h, n))
        b1 = rng.uniform(-0.5, 0.5, h)
        w2 = rng.uniform(-0.5, 0.5, (o, h))
        b2 = rng.uniform(-0.5, 0.5, o)
        if not use_bias:
            b1[:] = 0.0
            b2[:] = 0.0
        return cls(n=n, h=h, o=o, w1=w1, b1=b1, w2=w2, b2=b2, use_bias=use_bias)

    def copy(self) -> "BpnnModel":
        return BpnnModel(
            n=self.n, h=self.h, o=self.o,
            w1=self.w1.copy(), b1=self.b1.copy(),
            w2=self.w2.copy(), b2=self.b2.copy(),
            use_bias=self.use_bias,
            scale_min=self.scale_min.copy(), scale_max=self.scale_max.copy(),
            classes=self.classes,
        )

    def enrolled_classes(self) -> int:
        return self.classes if self.classes is not None else 2 ** self.o

    def scale(self, features: np.ndarray) -> np.ndarray:
        """Affine rescale by the stored training-set min/max; degenerate
        (constant) inputs map to 0."""
        span = self.scale_max - self.scale_min
        inv = np.where(span > 0, 1.0 / np.where(span > 0, span, 1.0), 0.0)
        return (np.asarray(features, dtype=np.float64) - self.scale_min) * inv


def _check_vector(v, length: int, name: str) -> np.ndarray:
    arr = np.ascontiguousarray(v, dtype=np.float64)
    if arr.shape != (length,):
        raise DimensionError(f"{name} must have length {length}, got shape {arr.shape}")
    return arr


def forward_hidden(model: BpnnModel, x) -> np.ndarray:
    """Hidden activations sigmoid(b1 + w1 @ x); no input scaling applied."""
    x = _check_vector(x, model.n, "input")
    hidden = np.empty(model.h)
    kernels.forward_hidden_rows(model.w1, model.b1, x, hidden, 0, model.h, True)
    return hidden


def forward_output(model: BpnnModel, hidden) -> np.ndarray:
    """Output activations sigmoid(b2 + w2 @ hidden)."""
    hidden = _check_vector(hidden, model.h, "hidden vector")
    out = np.empty(model.o)
    kernels.forward_output_rows(model.w2, model.b2, hidden, out, 0, model.o, True)
    return out


def backprop_update(model: BpnnModel, x, target, lr: float) -> float:
    """One stochastic gradient step on E = sum_j (t_j - y_j)^2 / 2.

    Output deltas use the sigmoid derivative y(1-y); hidden deltas read w2
    at its pre-update values. The model is updated in place. Returns the
    squared error sum_j (t_j - y_j)^2 measured before the update, the
    quantity epoch MSE accounting is built from.
    """
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    x = _check_vector(x, model.n, "input")
    t = _check_vector(target, model.o, "target")

    hidden = np.empty(model.h)
    out = np.empty(model.o)
    dout = np.empty(model.o)
    kernels.forward_hidden_rows(model.w1, model.b1, x, hidden, 0, model.h, True)
    kernels.forward_output_rows(model.w2, model.b2, hidden, out, 0, model.o, True)
    kernels.output_delta_rows(t, out, dout, 0, model.o)
    sqe = float(np.sum((t - out) ** 2))
    kernels.hidden_delta_update_rows(model.w1, model.b1, model.w2, dout, hidden,
                                     x, lr, model.use_bias, 0, model.h, True)
    kernels.output_update_rows(model.w2, model.b2, dout, hidden, lr,
                               model.use_bias, 0, model.o)
    return sqe


# ---------------------------------------------------------------------------
# Training


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    mse_target: float = 0.001
    max_epochs: int = 5000
    seed: int = 0
    backend: str = "serial"              # serial | parallel
    deterministic_reduction: bool = True
    workers: int | None = None           # parallel backend; None -> hardware

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.mse_target <= 0:
            raise ValueError("mse_target must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.backend not in ("serial", "parallel"):
            raise ValueError(f"unknown backend {self.backend!r}")


@dataclass
class TrainReport:
    epochs_run: int
    final_mse: float
    mse_history: list[float]
    backend: str
    total_seconds: float
    stage_seconds: dict[str, float] = field(default_factory=dict)


def _prepare(model, dataset):
    if len(dataset) == 0:
        raise EmptyDataset("training requires at least one sample")
    X = np.stack([_check_vector(f, model.n, "feature vector") for f, _ in dataset])
    targets = []
    for _, label in dataset:
        code = label if isinstance(label, LabelCode) else encode_label(int(label), model.o)
        targets.append(code.bits)
    T = np.asarray(targets, dtype=np.float64)
    return X, T


def train(model: BpnnModel, dataset, cfg: TrainConfig) -> TrainReport:
    """Per-sample updates in one seeded order until MSE target or epoch cap.

    ``dataset`` is a sequence of (feature vector, label) pairs; labels are
    class ids or LabelCodes. Input scaling parameters are fitted here from
    the dataset and stored on the model.
    """
    X, T = _prepare(model, dataset)
    S = X.shape[0]

    model.scale_min = X.min(axis=0)
    model.scale_max = X.max(axis=0)
    Xs = model.scale(X)

    order = np.random.default_rng(cfg.seed).permutation(S)
    Xo = np.ascontiguousarray(Xs[order])
    To = np.ascontiguousarray(T[order])

    if cfg.backend == "parallel":
        from .parallel import ParallelConfig, parallel_train_passes

        pcfg = ParallelConfig(
            worker_count=cfg.workers,
            deterministic_reduction=cfg.deterministic_reduction,
        )
        return parallel_train_passes(model, Xo, To, cfg, pcfg)

    hidden = np.empty(model.h)
    out = np.empty(model.o)
    dout = np.empty(model.o)
    stages = {"forward_hidden": 0.0, "forward_output": 0.0,
              "update_hidden": 0.0, "update_output": 0.0}
    history: list[float] = []
    t_start = time.perf_counter()
    for _ in range(cfg.max_epochs):
        sqe = 0.0
        for s in range(S):
            x = Xo[s]
            t = To[s]
            t0 = time.perf_counter()
            kernels.forward_hidden_rows(model.w1, model.b1, x, hidden,
                                        0, model.h, True)
            t1 = time.perf_counter()
            kernels.forward_output_rows(model.w2, model.b2, hidden, out,
                                        0, model.o, True)
            kernels.output_delta_rows(t, out, dout, 0, model.o)
            sqe += float(np.sum((t - out) ** 2))
            t2 = time.perf_counter()
            kernels.hidden_delta_update_rows(model.w1, model.b1, model.w2,
                                             dout, hidden, x,
                                             cfg.learning_rate,
                                             model.use_bias, 0, model.h, True)
            t3 = time.perf_counter()
            kernels.output_update_rows(model.w2, model.b2, dout, hidden,
                                       cfg.learning_rate, model.use_bias,
                                       0, model.o)
            t4 = time.perf_counter()
            stages["forward_hidden"] += t1 - t0
            stages["forward_output"] += t2 - t1
            stages["update_hidden"] += t3 - t2
            stages["update_output"] += t4 - t3
        history.append(sqe / (S * model.o))
        if history[-1] <= cfg.mse_target:
            break
    total = time.perf_counter() - t_start
    return TrainReport(epochs_run=len(history), final_mse=history[-1],
                       mse_history=history, backend="serial",
                       total_seconds=total, stage_seconds=stages)


# ---------------------------------------------------------------------------
# Classification


@dataclass
class Classification:
    class_id: int | None      # None when rejected as unknown
    outputs: np.ndarray
    distance: int             # Hamming distance to the nearest enrolled code
    nearest_match: bool       # True when the rounded code was not enrolled


def classify(model: BpnnModel, features, reject_distance: int | None = None) -> Classification:
    """Round outputs at 0.5 and resolve against the enrolled label codes.

    A rounded code that is itself an enrolled id wins at distance 0;
    otherwise the enrolled code with minimal Hamming distance (smallest id
    on ties) is reported with the nearest-match flag, or None when a reject
    threshold is set and exceeded.
    """
    x = model.scale(_check_vector(features, model.n, "feature vector"))
    hidden = forward_hidden(model, x)
    out = forward_output(model, hidden)
    bits = tuple(int(y >= 0.5) for y in out)
    code = decode_label(bits)
    n_classes = model.enrolled_classes()

    if code < n_classes:
        return Classification(code, out, 0, False)

    best_id, best_dist = 0, model.o + 1
    for cid in range(n_classes):
        d = sum(b != c for b, c in zip(bits, encode_label(cid, model.o).bits))
        if d < best_dist:
            best_id, best_dist = cid, d
    if reject_distance is not None and best_dist > reject_distance:
        return Classification(None, out, best_dist, True)
    return Classification(best_id, out, best_dist, True)


# ---------------------------------------------------------------------------
# Model file format
#
#   BPNN n h o bias_flag
#   scale_min (n values)   scale_max (n values)
#   w1 rows (h lines), b1, w2 rows (o lines), b2 — one row per line,
#   floats printed with 17 significant digits (exact for 64-bit values)


def _fmt(row) -> str:
    return " ".join(f"{v:.17g}" for v in np.atleast_1d(row))


def save_model(model: BpnnModel, path) -> None:
    lines = [f"BPNN {model.n} {model.h} {model.o} {int(model.use_bias)}"]
    lines.append(_fmt(model.scale_min))
    lines.append(_fmt(model.scale_max))
    for i in range(model.h):
        lines.append(_fmt(model.w1[i]))
    lines.append(_fmt(model.b1))
    for j in range(model.o):
        lines.append(_fmt(model.w2[j]))
    lines.append(_fmt(model.b2))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> BpnnModel:
    with open(path) as fh:
        lines = [ln for ln in (line.strip() for line in fh) if ln]
    if not lines:
        raise ParseError("empty model file")
    header = lines[0].split()
    if len(header) != 5 or header[0] != "BPNN":
        raise ParseError(f"bad model header {lines[0]!r}", 1)
    n, h, o, bias_flag = (int(v) for v in header[1:])
    expected = 2 + h + 1 + o + 1
    if len(lines) - 1 != expected:
        raise ParseError(f"expected {expected} data lines, found {len(lines) - 1}")

    def row(idx, length, name):
        values = np.array([float(v) for v in lines[idx].split()])
        if values.shape != (length,):
            raise ParseError(f"{name} row has {values.size} values, expected {length}",
                             idx + 1)
        return values

    scale_min = row(1, n, "scale_min")
    scale_max = row(2, n, "scale_max")
    w1 = np.stack([row(3 + i, n, "w1") for i in range(h)])
    b1 = row(3 + h, h, "b1")
    w2 = np.stack([row(4 + h + j, h, "w2") for j in range(o)])
    b2 = row(4 + h + o, o, "b2")
    return BpnnModel(n=n, h=h, o=o, w1=w1, b1=b1, w2=w2, b2=b2,
                     use_bias=bool(bias_flag),
                     scale_min=scale_min, scale_max=scale_max)
