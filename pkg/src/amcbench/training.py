"""Experimental protocol: stratified splits, batched Adam training with
early stopping on validation loss, and the 18-trial hyperparameter grid.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError, StratificationError, TrainingError
from .features import WindowPlan, frame_to_input, stack_input
from .network import ArchitectureConfig, Model, ModelCheckpoint, TrainMeta

# Grid rows in published order: LR sweeps fastest as (1.0, 0.5, 1.5) x 1e-4.
GRID_DROP_FACTORS = (0.4, 0.5, 0.6)
GRID_HEAD_L1 = (1024, 512)
GRID_LEARNING_RATES = (1.0e-4, 0.5e-4, 1.5e-4)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    learning_rate: float = 1.5e-4
    drop_factor: float = 0.6
    head_l1: int = 512
    max_epochs: int = 10
    patience: int = 3
    split: tuple = (0.8, 0.1, 0.1)
    seed: int = 0

    def validate(self):
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigurationError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.drop_factor < 1.0:
            raise ConfigurationError(f"drop_factor must be in [0, 1), got {self.drop_factor}")
        if self.max_epochs < 1:
            raise ConfigurationError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if not 1 <= self.patience <= self.max_epochs:
            raise ConfigurationError(f"patience must be in [1, max_epochs], got {self.patience}")
        fr = self.split
        if len(fr) != 3 or any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise ConfigurationError(f"split fractions must be >= 0 and sum to 1, got {fr}")


@dataclass
class TrainReport:
    epochs_run: int = 0
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    best_epoch: int = 0          # 1-based
    best_val_loss: float = math.inf
    initial_loss: float = math.nan  # first batch of epoch 1, before any update
    wall_time_s: float = 0.0


def report_csv(report: TrainReport, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "train_acc", "val_acc"])
        for i in range(report.epochs_run):
            writer.writerow([i + 1, repr(report.train_loss[i]), repr(report.val_loss[i]),
                             repr(report.train_acc[i]), repr(report.val_acc[i])])


# ---------------------------------------------------------------------------
# stratified splitting


def _cell_counts(n: int, fractions) -> tuple:
    """Per-cell allocation: every nonzero split receives >= 1 frame."""
    f_train, f_val, f_test = fractions
    needed = sum(1 for f in fractions if f > 0)
    if n < needed:
        raise StratificationError(f"cell of {n} frames cannot feed {needed} nonzero splits")
    n_val = max(1, int(f_val * n)) if f_val > 0 else 0
    n_test = max(1, int(f_test * n)) if f_test > 0 else 0
    n_train = n - n_val - n_test
    if f_train > 0 and n_train < 1:
        raise StratificationError(f"cell of {n} frames leaves no training frames at split {fractions}")
    if f_train == 0 and n_train > 0:
        if f_val > 0:
            n_val += n_train
        else:
            n_test += n_train
        n_train = 0
    return n_train, n_val, n_test


def split_corpus(frames, fractions, seed: int):
    """Stratified (train, val, test) split by (class, snr) cell; deterministic."""
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigurationError(f"split fractions must be >= 0 and sum to 1, got {fractions}")
    cells = {}
    for idx, frame in enumerate(frames):
        cells.setdefault((int(frame.label), frame.snr_db), []).append(idx)
    rng = np.random.default_rng(seed)
    train, val, test = [], [], []
    for key in sorted(cells):
        members = cells[key]
        order = rng.permutation(len(members))
        shuffled = [members[i] for i in order]
        n_train, n_val, n_test = _cell_counts(len(members), fractions)
        train += shuffled[:n_train]
        val += shuffled[n_train:n_train + n_val]
        test += shuffled[n_train + n_val:n_train + n_val + n_test]
    pick = lambda idxs: [frames[i] for i in idxs]
    return pick(train), pick(val), pick(test)


# ---------------------------------------------------------------------------
# training loop


class EarlyStopper:
    """Stop after `patience` consecutive epochs without a validation improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.stale = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        if val_loss < self.best:
            self.best = val_loss
            self.best_epoch = epoch
            self.stale = 0
        else:
            self.stale += 1
        return self.stale >= self.patience


def default_plan(arch: ArchitectureConfig) -> WindowPlan:
    return WindowPlan(window_len=arch.input_side, stride=arch.input_side // 2, count=arch.windows)


def derive_class_ids(frames, n_classes: int) -> tuple:
    """Head-output order -> modulation-class id.

    A head as wide as the number of distinct labels maps them densely in
    sorted id order; a wider head keeps raw ids as long as they all fit.
    """
    present = sorted({int(f.label) for f in frames})
    if len(present) == n_classes:
        return tuple(present)
    if present[-1] < n_classes:
        return tuple(range(n_classes))
    raise ConfigurationError(
        f"corpus labels {present} do not fit a {n_classes}-class head")


def featurize(frames, plan: WindowPlan, class_ids=None) -> tuple:
    """(N, T, 3, S, S) inputs and (N,) head-space integer labels."""
    xs = [stack_input(frame_to_input(f, plan)) for f in frames]
    if class_ids is None:
        labels = np.array([int(f.label) for f in frames], dtype=np.intp)
    else:
        lookup = {cid: head for head, cid in enumerate(class_ids)}
        try:
            labels = np.array([lookup[int(f.label)] for f in frames], dtype=np.intp)
        except KeyError as exc:
            raise ConfigurationError(f"corpus label {exc} missing from model classes {class_ids}")
    return np.stack(xs), labels


def _dataset_metrics(model: Model, x: np.ndarray, labels: np.ndarray, batch_size: int) -> tuple:
    """(mean loss, accuracy) over a dataset in inference mode."""
    total_loss = 0.0
    correct = 0
    for lo in range(0, len(x), batch_size):
        xb = x[lo:lo + batch_size]
        yb = labels[lo:lo + batch_size]
        probs = model.forward(xb, training=False)
        loss = ad.cross_entropy(probs, ad.one_hot(yb, model.config.classes))
        total_loss += float(loss.data) * len(xb)
        correct += int((probs.data.argmax(axis=1) == yb).sum())
    return total_loss / len(x), correct / len(x)


def train(model_config: ArchitectureConfig, train_config: TrainConfig, frames,
          log=None) -> tuple:
    """Run the full protocol; returns (TrainReport, ModelCheckpoint).

    The TrainConfig tunables (drop factor, first head width) override the
    architecture config, mirroring how the grid sweeps them.
    """
    train_config.validate()
    if not frames:
        raise ConfigurationError("corpus is empty")
    arch = replace(model_config, drop_factor=train_config.drop_factor,
                   head_l1=train_config.head_l1)
    arch.validate()
    plan = default_plan(arch)

    class_ids = derive_class_ids(frames, arch.classes)
    train_frames, val_frames, _ = split_corpus(frames, train_config.split, train_config.seed)
    if not train_frames:
        raise ConfigurationError("no training frames after split")
    x_train, y_train = featurize(train_frames, plan, class_ids)
    have_val = len(val_frames) > 0
    if have_val:
        x_val, y_val = featurize(val_frames, plan, class_ids)

    seeds = np.random.SeedSequence(train_config.seed).spawn(3)
    model = Model(arch, seed=seeds[0].generate_state(1)[0])
    shuffle_rng = np.random.default_rng(seeds[1])
    drop_rng = np.random.default_rng(seeds[2])
    state = ad.AdamState(lr=train_config.learning_rate)
    stopper = EarlyStopper(train_config.patience)

    report = TrainReport()
    best_state = model.state_copy()
    started = time.monotonic()

    for epoch in range(1, train_config.max_epochs + 1):
        order = shuffle_rng.permutation(len(x_train))
        epoch_loss = 0.0
        correct = 0
        for batch_idx, lo in enumerate(range(0, len(order), train_config.batch_size), start=1):
            sel = order[lo:lo + train_config.batch_size]
            probs = model.forward(x_train[sel], training=True, drop_rng=drop_rng)
            loss = ad.cross_entropy(probs, ad.one_hot(y_train[sel], arch.classes))
            loss_value = float(loss.data)
            if not math.isfinite(loss_value):
                bad = [n for n, p in model.params.items() if not np.all(np.isfinite(p.data))]
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {batch_idx}"
                    f" (non-finite parameters: {bad or 'none'})")
            if epoch == 1 and batch_idx == 1:
                report.initial_loss = loss_value
            ad.zero_grads(model.params)
            loss.backward()
            ad.adam_step(model.params, state)
            epoch_loss += loss_value * len(sel)
            correct += int((probs.data.argmax(axis=1) == y_train[sel]).sum())

        report.train_loss.append(epoch_loss / len(order))
        report.train_acc.append(correct / len(order))
        if have_val:
            val_loss, val_acc = _dataset_metrics(model, x_val, y_val, train_config.batch_size)
        else:
            val_loss, val_acc = math.nan, math.nan
        report.val_loss.append(val_loss)
        report.val_acc.append(val_acc)
        report.epochs_run = epoch
        if log:
            log(f"epoch {epoch}: train_loss={report.train_loss[-1]:.4f}"
                f" train_acc={report.train_acc[-1]:.3f} val_loss={val_loss:.4f} val_acc={val_acc:.3f}")

        if have_val:
            stop = stopper.update(epoch, val_loss)
            if stopper.best_epoch == epoch:
                best_state = model.state_copy()
            if stop:
                break
        else:
            best_state = model.state_copy()
            stopper.best_epoch = epoch

    report.wall_time_s = time.monotonic() - started
    report.best_epoch = stopper.best_epoch
    report.best_val_loss = stopper.best
    meta = TrainMeta(epochs_run=report.epochs_run, seed=train_config.seed,
                     best_val_loss=report.best_val_loss)
    return report, ModelCheckpoint(config=arch, state=best_state, meta=meta, class_ids=class_ids)


# ---------------------------------------------------------------------------
# hyperparameter grid


@dataclass(frozen=True)
class GridPoint:
    drop_factor: float
    head_l1: int
    learning_rate: float


@dataclass
class TrialResult:
    index: int  # 1-based, in grid order
    point: GridPoint
    best_val_loss: float = math.inf
    epochs_run: int = 0
    error: str = ""


def table1_grid() -> list:
    return [GridPoint(drop, l1, lr)
            for drop in GRID_DROP_FACTORS
            for l1 in GRID_HEAD_L1
            for lr in GRID_LEARNING_RATES]


def _run_trial(args):
    index, point, model_config, base, frames = args
    cfg = replace(base, drop_factor=point.drop_factor, head_l1=point.head_l1,
                  learning_rate=point.learning_rate)
    result = TrialResult(index=index, point=point)
    try:
        report, _ = train(model_config, cfg, frames)
        result.best_val_loss = report.best_val_loss
        result.epochs_run = report.epochs_run
    except Exception as exc:  # one failed trial must not abort the grid
        result.error = f"{type(exc).__name__}: {exc}"
    return result


def grid_search(model_config: ArchitectureConfig, base_config: TrainConfig, frames,
                grid=None, workers: int = 1, log=None) -> tuple:
    """Run every grid point; returns (results ranked by val loss, final checkpoint).

    The winner is re-trained as the final model; ties rank by trial index.
    """
    points = table1_grid() if grid is None else list(grid)
    if not points:
        raise ConfigurationError("hyperparameter grid is empty")
    tasks = [(i + 1, p, model_config, base_config, frames) for i, p in enumerate(points)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_trial, tasks))
    else:
        results = []
        for task in tasks:
            results.append(_run_trial(task))
            if log:
                r = results[-1]
                log(f"trial {r.index}/{len(tasks)}: drop={r.point.drop_factor}"
                    f" l1={r.point.head_l1} lr={r.point.learning_rate}"
                    f" best_val={r.best_val_loss:.4f} {r.error}")

    ranked = sorted(results, key=lambda r: (r.best_val_loss, r.index))
    winner = ranked[0]
    if not math.isfinite(winner.best_val_loss):
        raise TrainingError("every grid trial failed; no final model to train")
    final_cfg = replace(base_config, drop_factor=winner.point.drop_factor,
                        head_l1=winner.point.head_l1, learning_rate=winner.point.learning_rate)
    _, checkpoint = train(model_config, final_cfg, frames)
    return ranked, checkpoint


def grid_csv(results, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "drop_factor", "head_l1", "learning_rate",
                         "best_val_loss", "epochs_run", "error"])
        for r in results:
            writer.writerow([r.index, r.point.drop_factor, r.point.head_l1,
                             repr(r.point.learning_rate), repr(r.best_val_loss),
                             r.epochs_run, r.error])
