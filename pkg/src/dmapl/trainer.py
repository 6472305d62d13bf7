"""Training orchestration: source pre-training, moving-average adaptation,
the ablation variants, and hyperparameter sweeps.

Every routine is deterministic in (config, seed, data): one PCG64 stream per
run drives initialization and every shuffle, and no wall-clock state leaks
into the numerics. Adaptation splits the target training set exactly once,
with the source model, and never touches the frozen pseudo-labels afterwards.
"""

from __future__ import annotations

import itertools
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .datasets import Dataset, DomainShiftSpec, generate_domain_pair, stratified_split
from .evaluation import evaluate
from .losses import labeled_ce, soft_ce, total_loss
from .model import DivergenceError, Model, ModelConfig, SgdMomentum
from .numkit import DmaplError, l2_normalize_rows, make_rng
from .pseudolabel import CentroidBank, SoftLabelStore, class_feature_means
from .splitter import split_diagnostics, split_target

MODES = ("dmapl", "source_only", "naive_pl", "soft_label_no_split")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for source training and adaptation.

    Defaults are the reference values: threshold 0.9, both moving-average
    coefficients 0.9, trade-off 1.0, cosine schedule 1e-2 -> 1e-3, SGD
    momentum 0.9 with weight decay 1e-3, 20 epochs for either phase.
    """

    p_th: float = 0.9
    alpha: float = 0.9
    beta: float = 0.9
    lam: float = 1.0
    eta_0: float = 1e-2
    eta_1: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 1e-3
    source_epochs: int = 20
    adapt_epochs: int = 20
    batch_size_l: int = 64
    batch_size_u: int = 64
    seed: int = 0
    mode: str = "dmapl"
    hidden_dims: tuple[int, ...] = (64,)
    bottleneck_dim: int = 8
    encoder_lr_scale: float = 1.0

    def __post_init__(self) -> None:
        if not (0.0 < self.p_th < 1.0):
            raise ValueError("p_th must be in (0, 1)")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must be in (0, 1)")
        if not (0.0 < self.beta < 1.0):
            raise ValueError("beta must be in (0, 1)")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if not (self.eta_0 >= self.eta_1 > 0):
            raise ValueError("need eta_0 >= eta_1 > 0")
        if not (0.0 <= self.momentum < 1.0):
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if min(self.source_epochs, self.adapt_epochs, self.batch_size_l, self.batch_size_u) < 1:
            raise ValueError("epochs and batch sizes must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.encoder_lr_scale <= 0:
            raise ValueError("encoder_lr_scale must be > 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        d["hidden_dims"] = list(self.hidden_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        if "hidden_dims" in d:
            hd = d["hidden_dims"]
            if isinstance(hd, str):
                hd = [int(x) for x in hd.split(",") if x.strip()]
            elif isinstance(hd, int):
                hd = [hd]
            d["hidden_dims"] = tuple(int(x) for x in hd)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def model_config(self, input_dim: int, num_classes: int) -> ModelConfig:
        return ModelConfig(input_dim=input_dim, hidden_dims=self.hidden_dims,
                           bottleneck_dim=self.bottleneck_dim, num_classes=num_classes)


@dataclass
class RunRecord:
    """Append-only log of one run: config snapshot, per-epoch aggregates,
    split diagnostics and final figures. Wall clock is kept out of the
    summary so identical seeds serialize to identical summaries."""

    config: dict
    seed: int
    mode: str
    split: dict | None = None
    epochs: list[dict] = field(default_factory=list)
    final: dict = field(default_factory=dict)
    wall_clock_sec: float = 0.0

    def summary(self) -> dict:
        return {
            "config": self.config,
            "seed": self.seed,
            "mode": self.mode,
            "split": self.split,
            "n_epochs": len(self.epochs),
            "final": self.final,
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True)

    def epoch_lines(self) -> list[str]:
        return [json.dumps(e, sort_keys=True) for e in self.epochs]

    def save(self, out_dir: str, prefix: str = "") -> None:
        with open(os.path.join(out_dir, f"{prefix}epochs.jsonl"), "w") as fh:
            for line in self.epoch_lines():
                fh.write(line + "\n")
        with open(os.path.join(out_dir, f"{prefix}summary.json"), "w") as fh:
            fh.write(self.summary_json() + "\n")
        with open(os.path.join(out_dir, f"{prefix}meta.json"), "w") as fh:
            json.dump({"wall_clock_sec": self.wall_clock_sec}, fh)
            fh.write("\n")


class _Cycler:
    """Endless shuffled index stream over range(n), reshuffled per pass."""

    def __init__(self, n: int, rng: np.random.Generator):
        self.n = n
        self.rng = rng
        self.perm = rng.permutation(n)
        self.cursor = 0

    def draw(self, k: int) -> np.ndarray:
        out: list[np.ndarray] = []
        need = k
        while need > 0:
            if self.cursor >= self.n:
                self.perm = self.rng.permutation(self.n)
                self.cursor = 0
            take = min(need, self.n - self.cursor)
            out.append(self.perm[self.cursor:self.cursor + take])
            self.cursor += take
            need -= take
        return np.concatenate(out)


def train_source(source_train: Dataset, source_val: Dataset,
                 config: TrainConfig) -> tuple[Model, RunRecord]:
    """Cross-entropy pre-training on the labeled source split.

    Trains for `source_epochs` with the cosine schedule and returns the epoch
    checkpoint with the best validation accuracy (later epoch wins ties, so a
    saturated validation set yields the settled end-of-schedule model).
    """
    if not (source_train.is_labeled and source_val.is_labeled):
        raise ValueError("source datasets must be labeled")
    if source_train.num_classes != source_val.num_classes:
        raise ValueError("train and validation class counts differ")
    start = time.perf_counter()
    rng = make_rng(config.seed)
    model = Model.init(config.model_config(source_train.dim, source_train.num_classes), rng)
    iters_per_epoch = math.ceil(source_train.n / config.batch_size_l)
    opt = SgdMomentum(model, config.momentum, config.weight_decay, config.eta_0,
                      config.eta_1, config.source_epochs * iters_per_epoch,
                      config.encoder_lr_scale)
    record = RunRecord(config=config.to_dict(), seed=config.seed, mode="source_pretrain")
    best_model = model.copy()
    best_acc = -1.0
    t = 0
    for epoch in range(config.source_epochs):
        perm = rng.permutation(source_train.n)
        ce_sum = 0.0
        for b in range(iters_per_epoch):
            idx = perm[b * config.batch_size_l:(b + 1) * config.batch_size_l]
            x = source_train.features[idx]
            _, _, probs = model.forward(x)
            loss, grad = labeled_ce(probs, source_train.labels[idx])
            if not math.isfinite(loss):
                raise DivergenceError("non-finite source training loss")
            opt.step(model, model.backward(x, grad), t)
            t += 1
            ce_sum += loss
        val_acc = evaluate(model, source_val).micro
        if val_acc >= best_acc:
            best_acc = val_acc
            best_model = model.copy()
        record.epochs.append({"epoch": epoch, "train_ce": ce_sum / iters_per_epoch,
                              "val_micro": val_acc, "lr": opt.lr_at(t - 1)})
    record.final = {"best_val_micro": best_acc}
    record.wall_clock_sec = time.perf_counter() - start
    return best_model, record


def _moving_average_adapt(source_model: Model, target_train: Dataset, config: TrainConfig,
                          diagnostic_labels: np.ndarray | None, eval_data: Dataset | None,
                          use_split: bool,
                          snapshot_dir: str | None = None) -> tuple[Model, RunRecord, SoftLabelStore | None]:
    """Shared loop for the full method (use_split) and the no-split ablation.

    Per iteration: forward the joint batch, pick pseudo-labels (frozen ones
    for confident members, current argmax for unlabeled), update centroids
    with the batch's normalized features, assign prototypes with the updated
    centroids, update soft labels, then take the combined gradient step.
    Soft-label updates wait until every class centroid has been initialized;
    until then unlabeled rows carry zero mass and are inert in the loss.
    """
    start = time.perf_counter()
    rng = make_rng(config.seed)
    model = source_model.copy()
    num_classes = model.config.num_classes
    record = RunRecord(config=config.to_dict(), seed=config.seed, mode=config.mode)

    if use_split:
        split = split_target(source_model, target_train, config.p_th)
        labeled_idx = split.labeled_indices
        frozen_labels = split.pseudo_labels
        unlabeled_idx = split.unlabeled_indices
        record.split = split_diagnostics(split, diagnostic_labels)
    else:
        labeled_idx = np.empty(0, dtype=np.int64)
        frozen_labels = np.empty(0, dtype=np.int64)
        unlabeled_idx = np.arange(target_train.n)

    frozen_snapshot = frozen_labels.copy()
    n_l, n_u = labeled_idx.size, unlabeled_idx.size
    if n_u > 0:
        iters_per_epoch = math.ceil(n_u / config.batch_size_u)
    else:
        iters_per_epoch = math.ceil(n_l / config.batch_size_l)
    opt = SgdMomentum(model, config.momentum, config.weight_decay, config.eta_0,
                      config.eta_1, config.adapt_epochs * iters_per_epoch,
                      config.encoder_lr_scale)
    bank = CentroidBank(num_classes, model.config.bottleneck_dim, config.alpha)
    store = SoftLabelStore(n_u, num_classes, config.beta) if n_u else None
    cycler = _Cycler(n_l, rng) if n_l > config.batch_size_l else None

    t = 0
    for epoch in range(config.adapt_epochs):
        u_perm = rng.permutation(n_u)
        # degenerate all-confident case: one pass over the confident subset instead
        l_perm = rng.permutation(n_l) if n_u == 0 else None
        sums = {"loss_l": 0.0, "loss_u": 0.0, "loss_total": 0.0}
        for b in range(iters_per_epoch):
            if n_u > 0:
                u_pos = u_perm[b * config.batch_size_u:(b + 1) * config.batch_size_u]
                l_pos = (cycler.draw(config.batch_size_l) if cycler is not None
                         else np.arange(n_l))
            else:
                u_pos = np.empty(0, dtype=np.int64)
                l_pos = l_perm[b * config.batch_size_l:(b + 1) * config.batch_size_l]
            nl = l_pos.size
            x = np.vstack([target_train.features[labeled_idx[l_pos]],
                           target_train.features[unlabeled_idx[u_pos]]])
            features, logits, probs = model.forward(x)
            z = l2_normalize_rows(features)
            pseudo = np.concatenate([frozen_labels[l_pos],
                                     probs[nl:].argmax(axis=1)]).astype(np.int64)
            means, present = class_feature_means(z, pseudo, num_classes)
            bank.update(means, present)
            if store is not None and u_pos.size and bank.all_initialized:
                store.update(u_pos, bank.assign(z[nl:]))

            grad_logits = np.zeros_like(logits)
            if nl:
                loss_l, g_l = labeled_ce(probs[:nl], frozen_labels[l_pos])
                grad_logits[:nl] = config.lam * g_l
            else:
                loss_l = 0.0
            if u_pos.size:
                loss_u, g_u = soft_ce(probs[nl:], store.q[u_pos])
                grad_logits[nl:] = g_u
            else:
                loss_u = 0.0
            report = total_loss(loss_u, loss_l, config.lam)
            if not math.isfinite(report.total):
                raise DivergenceError("non-finite adaptation loss")
            opt.step(model, model.backward(x, grad_logits), t)
            t += 1
            sums["loss_l"] += report.loss_l
            sums["loss_u"] += report.loss_u
            sums["loss_total"] += report.total
        assert np.array_equal(frozen_labels, frozen_snapshot), \
            "frozen pseudo-labels were modified during adaptation"
        entry = {"epoch": epoch, "lr": opt.lr_at(t - 1)}
        entry.update({k: v / iters_per_epoch for k, v in sums.items()})
        if eval_data is not None:
            metrics = evaluate(model, eval_data)
            entry["test_macro"] = metrics.macro
            entry["test_micro"] = metrics.micro
        record.epochs.append(entry)
        if snapshot_dir is not None and store is not None:
            store.save_csv(os.path.join(snapshot_dir, f"soft_labels_epoch{epoch:03d}.csv"))

    record.final = {k: record.epochs[-1][k] for k in ("loss_l", "loss_u", "loss_total")}
    if eval_data is not None:
        metrics = evaluate(model, eval_data)
        record.final["test_macro"] = metrics.macro
        record.final["test_micro"] = metrics.micro
    record.wall_clock_sec = time.perf_counter() - start
    return model, record, store


def adapt_dmapl(source_model: Model, target_train: Dataset, config: TrainConfig,
                diagnostic_labels: np.ndarray | None = None,
                eval_data: Dataset | None = None,
                snapshot_dir: str | None = None) -> tuple[Model, RunRecord]:
    """Full adaptation: split once with the source model, then fine-tune with
    the dual moving-average objective. `diagnostic_labels` only feeds the
    split diagnostics; `eval_data` only adds test metrics to the record;
    `snapshot_dir` dumps a per-epoch soft-label CSV for audits."""
    if config.mode != "dmapl":
        raise ValueError("adapt_dmapl requires config.mode == 'dmapl'")
    model, record, _ = _moving_average_adapt(source_model, target_train, config,
                                             diagnostic_labels, eval_data, use_split=True,
                                             snapshot_dir=snapshot_dir)
    return model, record


def _naive_pseudo_label_adapt(source_model: Model, target_train: Dataset, config: TrainConfig,
                              eval_data: Dataset | None) -> tuple[Model, RunRecord]:
    """Self-training baseline: re-label everything with the current model at
    each epoch start, then train one epoch of hard CE on those labels."""
    start = time.perf_counter()
    rng = make_rng(config.seed)
    model = source_model.copy()
    record = RunRecord(config=config.to_dict(), seed=config.seed, mode=config.mode)
    iters_per_epoch = math.ceil(target_train.n / config.batch_size_l)
    opt = SgdMomentum(model, config.momentum, config.weight_decay, config.eta_0,
                      config.eta_1, config.adapt_epochs * iters_per_epoch,
                      config.encoder_lr_scale)
    t = 0
    for epoch in range(config.adapt_epochs):
        labels = model.predict(target_train.features)
        perm = rng.permutation(target_train.n)
        ce_sum = 0.0
        for b in range(iters_per_epoch):
            idx = perm[b * config.batch_size_l:(b + 1) * config.batch_size_l]
            x = target_train.features[idx]
            _, _, probs = model.forward(x)
            loss, grad = labeled_ce(probs, labels[idx])
            if not math.isfinite(loss):
                raise DivergenceError("non-finite naive pseudo-labeling loss")
            opt.step(model, model.backward(x, grad), t)
            t += 1
            ce_sum += loss
        entry = {"epoch": epoch, "loss_l": ce_sum / iters_per_epoch, "loss_u": 0.0,
                 "loss_total": ce_sum / iters_per_epoch, "lr": opt.lr_at(t - 1)}
        if eval_data is not None:
            metrics = evaluate(model, eval_data)
            entry["test_macro"] = metrics.macro
            entry["test_micro"] = metrics.micro
        record.epochs.append(entry)
    record.final = {k: record.epochs[-1][k] for k in ("loss_l", "loss_u", "loss_total")}
    if eval_data is not None:
        metrics = evaluate(model, eval_data)
        record.final["test_macro"] = metrics.macro
        record.final["test_micro"] = metrics.micro
    record.wall_clock_sec = time.perf_counter() - start
    return model, record


def adapt_ablation(source_model: Model, target_train: Dataset, config: TrainConfig,
                   diagnostic_labels: np.ndarray | None = None,
                   eval_data: Dataset | None = None,
                   snapshot_dir: str | None = None) -> tuple[Model, RunRecord]:
    """The ablation variants: source_only (return the source model untouched),
    naive_pl (epoch-wise hard self-training on all instances), and
    soft_label_no_split (the moving-average loop with every instance treated
    as unlabeled, no confident anchor term)."""
    if config.mode == "source_only":
        record = RunRecord(config=config.to_dict(), seed=config.seed, mode=config.mode)
        model = source_model.copy()
        if eval_data is not None:
            metrics = evaluate(model, eval_data)
            record.final = {"test_macro": metrics.macro, "test_micro": metrics.micro}
        return model, record
    if config.mode == "naive_pl":
        return _naive_pseudo_label_adapt(source_model, target_train, config, eval_data)
    if config.mode == "soft_label_no_split":
        model, record, _ = _moving_average_adapt(source_model, target_train, config,
                                                 diagnostic_labels, eval_data, use_split=False,
                                                 snapshot_dir=snapshot_dir)
        return model, record
    raise ValueError("adapt_ablation requires an ablation mode")


def adapt(source_model: Model, target_train: Dataset, config: TrainConfig,
          diagnostic_labels: np.ndarray | None = None,
          eval_data: Dataset | None = None,
          snapshot_dir: str | None = None) -> tuple[Model, RunRecord]:
    """Dispatch on config.mode."""
    if config.mode == "dmapl":
        return adapt_dmapl(source_model, target_train, config, diagnostic_labels,
                           eval_data, snapshot_dir)
    return adapt_ablation(source_model, target_train, config, diagnostic_labels,
                          eval_data, snapshot_dir)


@dataclass
class Benchmark:
    """The six datasets of one benchmark instance. Target-train labels exist
    here only for diagnostics and oracle accounting; adaptation always gets
    the unlabeled view."""

    source_train: Dataset
    source_val: Dataset
    source_test: Dataset
    target_train: Dataset
    target_test: Dataset


def prepare_benchmark(spec: DomainShiftSpec, split_ratio: float = 0.8,
                      val_fraction: float = 0.1) -> Benchmark:
    """Generate the domain pair and apply the stratified splits: both domains
    8:2 train/test by default, source train further carved for validation.
    Split seeds derive from spec.seed, so the whole benchmark is one seed."""
    source, target = generate_domain_pair(spec)
    s_split, s_val, t_split = (int(s) for s in
                               np.random.SeedSequence(entropy=spec.seed,
                                                      spawn_key=(1,)).generate_state(3))
    source_train_full, source_test = stratified_split(source, split_ratio, s_split)
    source_train, source_val = stratified_split(source_train_full, 1.0 - val_fraction, s_val)
    target_train, target_test = stratified_split(target, split_ratio, t_split)
    return Benchmark(source_train, source_val, source_test, target_train, target_test)


def run_experiment(spec: DomainShiftSpec, config: TrainConfig,
                   eval_per_epoch: bool = False) -> dict:
    """Full pipeline on one benchmark seed: pre-train, adapt per config.mode,
    evaluate source-only and adapted models on the target test set."""
    bench = prepare_benchmark(spec)
    source_model, source_record = train_source(bench.source_train, bench.source_val, config)
    source_metrics = evaluate(source_model, bench.target_test)
    adapted, record = adapt(source_model, bench.target_train.without_labels(), config,
                            diagnostic_labels=bench.target_train.labels,
                            eval_data=bench.target_test if eval_per_epoch else None)
    adapted_metrics = evaluate(adapted, bench.target_test)
    return {
        "mode": config.mode,
        "seed": spec.seed,
        "source_val_micro": source_record.final["best_val_micro"],
        "source_test_macro": source_metrics.macro,
        "source_test_micro": source_metrics.micro,
        "test_macro": adapted_metrics.macro,
        "test_micro": adapted_metrics.micro,
        "split": record.split,
        "record": record,
    }


SWEEPABLE = ("p_th", "alpha", "beta", "lambda")


def _sweep_one_seed(args: tuple) -> list[dict]:
    spec, base_config, keys, cells, seed = args
    spec = replace(spec, seed=seed)
    config = replace(base_config, seed=seed)
    bench = prepare_benchmark(spec)
    source_model, _ = train_source(bench.source_train, bench.source_val, config)
    rows = []
    for cell in cells:
        overrides = {("lam" if k == "lambda" else k): v for k, v in zip(keys, cell)}
        cell_config = replace(config, **overrides)
        row = {k: v for k, v in zip(keys, cell)}
        row["seed"] = seed
        try:
            adapted, record = adapt_dmapl(source_model, bench.target_train.without_labels(),
                                          cell_config,
                                          diagnostic_labels=bench.target_train.labels)
            metrics = evaluate(adapted, bench.target_test)
            row.update(ratio=record.split["ratio"], pl_acc=record.split["pl_accuracy"],
                       test_acc=metrics.micro, error=None)
        except DmaplError as exc:
            row.update(ratio=None, pl_acc=None, test_acc=None, error=str(exc))
        rows.append(row)
    return rows


def sweep(spec: DomainShiftSpec, base_config: TrainConfig, grid: dict[str, list],
          seeds: list[int] | None = None, jobs: int = 1) -> list[dict]:
    """One adaptation run per (grid cell, seed). The source model is trained
    once per seed and shared across cells (the sweepable parameters only touch
    adaptation). A failing cell is recorded with its error and the sweep
    continues. Rows come back in deterministic (seed, cell) order."""
    if not grid:
        raise ValueError("empty grid")
    unknown = set(grid) - set(SWEEPABLE)
    if unknown:
        raise ValueError(f"grid keys must be among {SWEEPABLE}, got {sorted(unknown)}")
    if any(len(v) == 0 for v in grid.values()):
        raise ValueError("empty grid axis")
    if base_config.mode != "dmapl":
        raise ValueError("sweep runs the dmapl mode")
    keys = list(grid.keys())
    cells = list(itertools.product(*(grid[k] for k in keys)))
    if seeds is None:
        seeds = [base_config.seed]
    work = [(spec, base_config, keys, cells, seed) for seed in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_seed = list(pool.map(_sweep_one_seed, work))
    else:
        per_seed = [_sweep_one_seed(w) for w in work]
    return [row for rows in per_seed for row in rows]
