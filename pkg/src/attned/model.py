"""Model assembly, training, hyperparameter search, and checkpoints.

Two architectures: the attention encoder-decoder (attn-ED) that this
package is about, and a plain single-layer LSTM baseline with a dense
head and no regularization for benchmarking against.

Checkpoint format: ``b"AEDC"`` magic, u32 little-endian header length,
UTF-8 JSON header (format version, kind, hyperparameters, shapes,
feature names, scaler, parameter offset table), then one contiguous
little-endian float64 blob holding every parameter at the recorded
offsets.
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from . import nncore as nn
from .errors import CheckpointError, ConfigError, DataError, NumericError
from .prep import (
    FEATURE_NAMES,
    SECONDS_PER_DAY,
    USAGE_INDEX,
    PreparedDataset,
    ScalerParams,
    WindowSample,
    invert_usage,
)

HIDDEN_CHOICES = (32, 64, 128, 216, 512)
BATCH_CHOICES = (16, 32, 64)
ACTIVATION_CHOICES = ("relu", "sigmoid", "tanh")
RATE_RANGE = (0.0001, 0.01)

GRAD_CLIP_NORM = 5.0
DEFAULT_MAX_EPOCHS = 500
DEFAULT_PATIENCE = 20


@dataclass(frozen=True)
class HyperParams:
    """Tunable settings; see PRESETS for the shipped configurations."""

    hidden_units: int = 128
    lstm_dropout: float = 0.001
    recurrent_dropout: float = 0.001
    layer_dropout: float = 0.001
    dense_activation: str = "tanh"
    learning_rate: float = 0.001
    batch_size: int = 32

    def validate(self, *, grid: bool = False) -> None:
        """Sanity-check values; with grid=True also require membership in
        the search grid (hidden/batch choices, rate ranges)."""
        if self.hidden_units < 1:
            raise ConfigError("hidden_units must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.dense_activation not in ACTIVATION_CHOICES + ("identity",):
            raise ConfigError(f"unknown dense_activation {self.dense_activation!r}")
        for name in ("lstm_dropout", "recurrent_dropout", "layer_dropout"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ConfigError(f"{name} must be in [0, 1)")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if grid:
            if self.hidden_units not in HIDDEN_CHOICES:
                raise ConfigError(f"hidden_units must be one of {HIDDEN_CHOICES}")
            if self.batch_size not in BATCH_CHOICES:
                raise ConfigError(f"batch_size must be one of {BATCH_CHOICES}")
            if self.dense_activation not in ACTIVATION_CHOICES:
                raise ConfigError(f"dense_activation must be one of {ACTIVATION_CHOICES}")
            lo, hi = RATE_RANGE
            for name in ("lstm_dropout", "recurrent_dropout", "layer_dropout", "learning_rate"):
                v = getattr(self, name)
                if not lo <= v <= hi:
                    raise ConfigError(f"{name} must be in [{lo}, {hi}]")

    def dropout_rates(self) -> nn.DropoutRates:
        return nn.DropoutRates(self.lstm_dropout, self.recurrent_dropout, self.layer_dropout)


PRESETS: dict[str, HyperParams] = {
    # settings found by hyper-tuning on the original study data
    "optimal-evotion": HyperParams(
        hidden_units=128,
        lstm_dropout=0.0002,
        recurrent_dropout=0.0041,
        layer_dropout=0.0008,
        dense_activation="tanh",
        learning_rate=0.0013,
        batch_size=32,
    ),
    # small/fast settings used by the shipped synthetic benchmark
    "benchmark": HyperParams(
        hidden_units=32,
        lstm_dropout=0.0002,
        recurrent_dropout=0.0002,
        layer_dropout=0.0002,
        dense_activation="tanh",
        learning_rate=0.003,
        batch_size=64,
    ),
}


class ForecastModel:
    """Shared behavior: original-unit prediction and checkpoint headers."""

    kind = ""
    hp: HyperParams
    window_len: int
    horizon: int
    n_features: int
    feature_names: tuple[str, ...]
    scaler: ScalerParams | None
    seed: int
    preset: str | None

    def params(self) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def param_count(self) -> int:
        return sum(p.size for p in self.params().values())

    def forward(
        self,
        x: np.ndarray,
        *,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> np.ndarray:
        raise NotImplementedError

    def loss_and_grads(
        self, x: np.ndarray, y: np.ndarray, rng: np.random.Generator | None = None
    ) -> tuple[float, dict[str, np.ndarray]]:
        raise NotImplementedError

    def predict(self, windows: np.ndarray) -> np.ndarray:
        """Forecast in original units (seconds), clamped to one day.

        ``windows`` is (B, L, F) or a single (L, F) window, already scaled
        with the model's scaler.
        """
        if self.scaler is None:
            raise ConfigError("model has no scaler; cannot produce original-unit forecasts")
        x = np.asarray(windows, dtype=float)
        single = x.ndim == 2
        if single:
            x = x[None]
        preds = self.forward(x)
        seconds = invert_usage(preds, self.scaler)
        seconds = np.clip(seconds, 0.0, SECONDS_PER_DAY)
        return seconds[0] if single else seconds

    def _header(self) -> dict:
        return {
            "kind": self.kind,
            "hyperparams": asdict(self.hp),
            "window_len": self.window_len,
            "horizon": self.horizon,
            "n_features": self.n_features,
            "feature_names": list(self.feature_names),
            "scaler": self.scaler.to_dict() if self.scaler else None,
            "seed": self.seed,
            "preset": self.preset,
        }


class AttnEdModel(ForecastModel):
    """Encoder LSTM + parameter-free self-attention + decoder LSTM + head.

    The decoder consumes the mean-pooled attention context concatenated
    with the previous step's scalar prediction (seeded by the window's
    final usage value) and is initialized from the encoder's final state.
    """

    kind = "attn_ed"

    def __init__(
        self,
        enc: nn.LstmParams,
        dec: nn.LstmParams,
        head: nn.DenseParams,
        hp: HyperParams,
        window_len: int,
        horizon: int,
        n_features: int,
        feature_names: tuple[str, ...] = FEATURE_NAMES,
        scaler: ScalerParams | None = None,
        seed: int = 0,
        preset: str | None = None,
    ) -> None:
        self.enc = enc
        self.dec = dec
        self.head = head
        self.hp = hp
        self.window_len = window_len
        self.horizon = horizon
        self.n_features = n_features
        self.feature_names = tuple(feature_names)
        self.scaler = scaler
        self.seed = seed
        self.preset = preset
        self.usage_index = (
            self.feature_names.index("Usage") if "Usage" in self.feature_names else USAGE_INDEX
        )

    @classmethod
    def build(
        cls,
        hp: HyperParams,
        window_len: int,
        horizon: int,
        n_features: int,
        seed: int = 0,
        feature_names: tuple[str, ...] = FEATURE_NAMES,
        scaler: ScalerParams | None = None,
        preset: str | None = None,
    ) -> "AttnEdModel":
        hp.validate()
        if window_len < 1 or horizon < 1 or n_features < 1:
            raise ConfigError("window_len, horizon, n_features must be >= 1")
        rng = np.random.default_rng([seed, 0xA77])
        d = hp.hidden_units
        enc = nn.init_lstm(n_features, d, rng)
        dec = nn.init_lstm(d + 1, d, rng)
        head = nn.DenseParams(
            nn.glorot_uniform(rng, d, 1, (d, 1)), np.zeros(1), hp.dense_activation
        )
        return cls(
            enc, dec, head, hp, window_len, horizon, n_features,
            feature_names, scaler, seed, preset,
        )

    def params(self) -> dict[str, np.ndarray]:
        return nn.attn_ed_param_template(self.enc, self.dec, self.head)

    def forward(
        self,
        x: np.ndarray,
        *,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> np.ndarray:
        preds, _ = nn.attn_ed_forward(
            self.enc,
            self.dec,
            self.head,
            x,
            self.horizon,
            usage_index=self.usage_index,
            rates=self.hp.dropout_rates() if training else nn.DropoutRates(),
            training=training,
            rng=rng,
        )
        return preds

    def loss_and_grads(
        self, x: np.ndarray, y: np.ndarray, rng: np.random.Generator | None = None
    ) -> tuple[float, dict[str, np.ndarray]]:
        return nn.attn_ed_loss_and_grads(
            self.enc,
            self.dec,
            self.head,
            x,
            y,
            usage_index=self.usage_index,
            rates=self.hp.dropout_rates(),
            training=True,
            rng=rng,
        )


class VanillaLstm(ForecastModel):
    """Baseline: one 32-unit LSTM, dense head over the final hidden state,
    default settings, no dropout."""

    kind = "vanilla_lstm"

    DEFAULT_HIDDEN = 32

    def __init__(
        self,
        lstm: nn.LstmParams,
        head: nn.DenseParams,
        window_len: int,
        horizon: int,
        n_features: int,
        feature_names: tuple[str, ...] = FEATURE_NAMES,
        scaler: ScalerParams | None = None,
        seed: int = 0,
    ) -> None:
        self.lstm = lstm
        self.head = head
        self.hp = HyperParams(
            hidden_units=lstm.hidden_size,
            lstm_dropout=0.0,
            recurrent_dropout=0.0,
            layer_dropout=0.0,
            dense_activation="identity",
            learning_rate=0.001,
            batch_size=32,
        )
        self.window_len = window_len
        self.horizon = horizon
        self.n_features = n_features
        self.feature_names = tuple(feature_names)
        self.scaler = scaler
        self.seed = seed
        self.preset = None

    @classmethod
    def build(
        cls,
        window_len: int,
        n_features: int,
        horizon: int,
        seed: int = 0,
        hidden_units: int = DEFAULT_HIDDEN,
        feature_names: tuple[str, ...] = FEATURE_NAMES,
        scaler: ScalerParams | None = None,
    ) -> "VanillaLstm":
        rng = np.random.default_rng([seed, 0xBA5E])
        lstm = nn.init_lstm(n_features, hidden_units, rng)
        head = nn.DenseParams(
            nn.glorot_uniform(rng, hidden_units, horizon, (hidden_units, horizon)),
            np.zeros(horizon),
            "identity",
        )
        return cls(lstm, head, window_len, horizon, n_features, feature_names, scaler, seed)

    def params(self) -> dict[str, np.ndarray]:
        return nn.vanilla_param_template(self.lstm, self.head)

    def forward(
        self,
        x: np.ndarray,
        *,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> np.ndarray:
        preds, _ = nn.vanilla_forward(self.lstm, self.head, x)
        return preds

    def loss_and_grads(
        self, x: np.ndarray, y: np.ndarray, rng: np.random.Generator | None = None
    ) -> tuple[float, dict[str, np.ndarray]]:
        return nn.vanilla_loss_and_grads(self.lstm, self.head, x, y)


Model = ForecastModel


@dataclass(slots=True)
class TrainReport:
    """Per-epoch loss curves and the early-stopping outcome."""

    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False
    wall_time_s: float = 0.0
    seed: int = 0

    @property
    def best_val_loss(self) -> float:
        return self.val_losses[self.best_epoch - 1]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch,train_mse,val_mse,elapsed_s\n")
            for i, (tr, va, el) in enumerate(
                zip(self.train_losses, self.val_losses, self.epoch_seconds), start=1
            ):
                fh.write(f"{i},{tr:.10g},{va:.10g},{el:.3f}\n")


def _val_mse(model: Model, x_val: np.ndarray, y_val: np.ndarray, chunk: int = 1024) -> float:
    total = 0.0
    n = 0
    for start in range(0, len(x_val), chunk):
        preds = model.forward(x_val[start : start + chunk])
        block = y_val[start : start + chunk]
        total += float(((preds - block) ** 2).sum())
        n += block.size
    return total / n


def train(
    model: Model,
    train_samples: Sequence[WindowSample] | tuple[np.ndarray, np.ndarray],
    val_samples: Sequence[WindowSample] | tuple[np.ndarray, np.ndarray],
    max_epochs: int = DEFAULT_MAX_EPOCHS,
    patience: float = DEFAULT_PATIENCE,
    seed: int = 0,
) -> TrainReport:
    """Mini-batch Adam on scaled-space MSE with early stopping.

    Validation MSE is checked after every epoch; when it fails to improve
    for ``patience`` consecutive epochs training stops and the best
    epoch's parameters are restored. Shuffling is seeded per epoch, so a
    run is fully reproducible.
    """
    x_tr, y_tr = _as_arrays(train_samples)
    x_va, y_va = _as_arrays(val_samples)
    if len(x_tr) == 0 or len(x_va) == 0:
        raise DataError("training and validation sets must be non-empty")

    params = model.params()
    opt = nn.init_adam(params, lr=model.hp.learning_rate)
    report = TrainReport(seed=seed)
    best_val = np.inf
    best_params: dict[str, np.ndarray] = {k: p.copy() for k, p in params.items()}
    since_improvement = 0
    t_start = time.perf_counter()

    for epoch in range(1, max_epochs + 1):
        t_epoch = time.perf_counter()
        order = np.random.default_rng([seed, epoch]).permutation(len(x_tr))
        batch = model.hp.batch_size
        epoch_loss = 0.0
        n_points = 0
        for b_idx, start in enumerate(range(0, len(order), batch)):
            sel = order[start : start + batch]
            drop_rng = np.random.default_rng([seed, epoch, b_idx])
            loss, grads = model.loss_and_grads(x_tr[sel], y_tr[sel], rng=drop_rng)
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite training loss at epoch {epoch}, batch {b_idx} "
                    f"(learning rate {model.hp.learning_rate})"
                )
            nn.clip_global_norm(grads, GRAD_CLIP_NORM)
            nn.adam_update(params, grads, opt)
            epoch_loss += loss * y_tr[sel].size
            n_points += y_tr[sel].size

        val_loss = _val_mse(model, x_va, y_va)
        report.train_losses.append(epoch_loss / n_points)
        report.val_losses.append(val_loss)
        report.epoch_seconds.append(time.perf_counter() - t_epoch)

        if val_loss < best_val:
            best_val = val_loss
            report.best_epoch = epoch
            best_params = {k: p.copy() for k, p in params.items()}
            since_improvement = 0
        else:
            since_improvement += 1
            if since_improvement >= patience:
                report.stopped_early = True
                break

    for k, p in params.items():
        p[...] = best_params[k]
    report.wall_time_s = time.perf_counter() - t_start
    return report


def _as_arrays(
    samples: Sequence[WindowSample] | tuple[np.ndarray, np.ndarray]
) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(samples, tuple):
        return samples
    if not samples:
        return np.zeros((0, 1, 1)), np.zeros((0, 1))
    x = np.stack([s.inputs for s in samples])
    y = np.stack([s.target for s in samples])
    return x, y


@dataclass(slots=True)
class Trial:
    index: int
    hp: HyperParams
    val_mse: float
    epochs_ran: int


def sample_hyperparams(rng: np.random.Generator) -> HyperParams:
    """Draw one random-search configuration from the tuning grid.

    Categorical settings are uniform over their choices; the continuous
    rates are log-uniform over [0.0001, 0.01].
    """
    lo, hi = np.log(RATE_RANGE[0]), np.log(RATE_RANGE[1])

    def log_uniform() -> float:
        return float(np.exp(rng.uniform(lo, hi)))

    return HyperParams(
        hidden_units=int(rng.choice(HIDDEN_CHOICES)),
        lstm_dropout=log_uniform(),
        recurrent_dropout=log_uniform(),
        layer_dropout=log_uniform(),
        dense_activation=str(rng.choice(ACTIVATION_CHOICES)),
        learning_rate=log_uniform(),
        batch_size=int(rng.choice(BATCH_CHOICES)),
    )


def hyper_search(
    train_samples: Sequence[WindowSample] | tuple[np.ndarray, np.ndarray],
    val_samples: Sequence[WindowSample] | tuple[np.ndarray, np.ndarray],
    window_len: int,
    horizon: int,
    n_features: int,
    budget: int = 60,
    seed: int = 0,
    epoch_cap: int = 100,
    patience: int = 10,
    max_workers: int = 1,
    scaler: ScalerParams | None = None,
    feature_names: tuple[str, ...] = FEATURE_NAMES,
) -> tuple[HyperParams, list[Trial]]:
    """Random search over the tuning grid; best trial = lowest validation
    MSE, ties broken by trial order. Reproducible from ``seed``."""
    if budget < 1:
        raise ConfigError("budget must be >= 1")
    x_tr, y_tr = _as_arrays(train_samples)
    x_va, y_va = _as_arrays(val_samples)

    def run_trial(i: int) -> Trial:
        hp = sample_hyperparams(np.random.default_rng([seed, i]))
        model = AttnEdModel.build(
            hp, window_len, horizon, n_features,
            seed=seed * 100_003 + i, feature_names=feature_names, scaler=scaler,
        )
        rep = train(model, (x_tr, y_tr), (x_va, y_va), max_epochs=epoch_cap,
                    patience=patience, seed=seed * 100_003 + i)
        return Trial(i, hp, rep.best_val_loss, len(rep.val_losses))

    if max_workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            trials = list(pool.map(run_trial, range(budget)))
    else:
        trials = [run_trial(i) for i in range(budget)]

    best = min(trials, key=lambda t: (t.val_mse, t.index))
    return best.hp, trials


_CKPT_MAGIC = b"AEDC"
_CKPT_VERSION = 1


def save_checkpoint(model: Model, path: str | Path) -> None:
    """Write the JSON header plus a contiguous float64 parameter blob."""
    params = model.params()
    offsets = {}
    cursor = 0
    for name, arr in params.items():
        offsets[name] = {"offset": cursor, "shape": list(arr.shape)}
        cursor += arr.size
    header = model._header()
    header["format_version"] = _CKPT_VERSION
    header["param_table"] = offsets
    header["n_doubles"] = cursor
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for arr in params.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> Model:
    """Reconstruct a model; refuses corrupt or version-mismatched files."""
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:4] != _CKPT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (header_len,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + header_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from None
    if header.get("format_version") != _CKPT_VERSION:
        raise CheckpointError(
            f"{path}: format version {header.get('format_version')} "
            f"not supported (expected {_CKPT_VERSION})"
        )
    blob = raw[8 + header_len :]
    n_doubles = header["n_doubles"]
    if len(blob) != 8 * n_doubles:
        raise CheckpointError(
            f"{path}: parameter blob holds {len(blob)} bytes, expected {8 * n_doubles}"
        )
    flat = np.frombuffer(blob, dtype="<f8")

    hp = HyperParams(**header["hyperparams"])
    scaler = ScalerParams.from_dict(header["scaler"]) if header["scaler"] else None
    feature_names = tuple(header["feature_names"])
    kind = header["kind"]
    if kind == AttnEdModel.kind:
        model: Model = AttnEdModel.build(
            hp, header["window_len"], header["horizon"], header["n_features"],
            seed=header["seed"], feature_names=feature_names, scaler=scaler,
            preset=header.get("preset"),
        )
    elif kind == VanillaLstm.kind:
        model = VanillaLstm.build(
            header["window_len"], header["n_features"], header["horizon"],
            seed=header["seed"], hidden_units=hp.hidden_units,
            feature_names=feature_names, scaler=scaler,
        )
    else:
        raise CheckpointError(f"{path}: unknown model kind {kind!r}")

    params = model.params()
    for name, entry in header["param_table"].items():
        if name not in params:
            raise CheckpointError(f"{path}: unexpected parameter {name!r}")
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        block = flat[entry["offset"] : entry["offset"] + size]
        params[name][...] = block.reshape(shape)
    return model


def build_from_dataset(
    dataset: PreparedDataset,
    hp: HyperParams | None = None,
    *,
    kind: str = "attn_ed",
    seed: int = 0,
    preset: str | None = None,
) -> Model:
    """Convenience constructor wiring in the dataset's scaler and shapes."""
    f = len(dataset.feature_names)
    if kind == AttnEdModel.kind:
        return AttnEdModel.build(
            hp or PRESETS["optimal-evotion"],
            dataset.window_len,
            dataset.horizon,
            f,
            seed=seed,
            feature_names=dataset.feature_names,
            scaler=dataset.scaler,
            preset=preset,
        )
    if kind == VanillaLstm.kind:
        return VanillaLstm.build(
            dataset.window_len,
            f,
            dataset.horizon,
            seed=seed,
            feature_names=dataset.feature_names,
            scaler=dataset.scaler,
        )
    raise ConfigError(f"unknown model kind {kind!r}")
