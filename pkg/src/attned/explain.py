"""Model-agnostic Shapley-value explanations for forecasts.

Features are the named daily inputs; "removing" feature i replaces its
entire input-window trajectory with the corresponding trajectory from a
background window, and coalition values average the model output over
the whole background set. Attributions solve the weighted least squares
system whose kernel weights make the solution equal the Shapley values,
with the all-features and no-features coalitions imposed as hard
constraints (so phi_0 + sum phi_i always equals the explained output).

Up to 12 features every coalition is enumerated and the solution is
exact; beyond that, paired coalition sampling approximates it. A direct
permutation-average enumerator is included as an independent oracle.

Summary plots are emitted as standalone SVG 1.1 beeswarm charts plus a
companion CSV of the plotted values.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DataError, ProtocolError
from .model import Model
from .prep import PreparedDataset, WindowSample, invert_scaler

EXACT_MAX_FEATURES = 12

# model_fn contract: takes a stacked array with one extra leading axis
# over instances and returns one scalar per instance
ModelFn = Callable[[np.ndarray], np.ndarray]


def shapley_kernel_weight(m: int, k: int) -> float:
    """Kernel weight (m-1) / (C(m,k) * k * (m-k)) for coalition size k.

    The empty and full coalitions carry infinite weight and are handled
    as constraints, never as weighted rows; asking for them is an error.
    """
    if m < 2:
        raise ConfigError("need at least 2 features for kernel weights")
    if k <= 0 or k >= m:
        raise ConfigError(
            f"coalition size {k} of {m} is a hard constraint, not a weighted row"
        )
    return (m - 1) / (math.comb(m, k) * k * (m - k))


def _masked_inputs(
    instance: np.ndarray, background: np.ndarray, coalitions: np.ndarray
) -> np.ndarray:
    """Stack model inputs for every (coalition, background row) pair.

    Feature axis is the last one; a True entry keeps the instance's
    trajectory for that feature, False substitutes the background's.
    Output shape: (n_coalitions * n_background,) + instance.shape.
    """
    n_coal = coalitions.shape[0]
    n_bg = background.shape[0]
    out = np.empty((n_coal, n_bg) + instance.shape)
    for j, z in enumerate(coalitions):
        out[j] = np.where(z, instance, background)
    return out.reshape((n_coal * n_bg,) + instance.shape)


def _coalition_values(
    model_fn: ModelFn,
    instance: np.ndarray,
    background: np.ndarray,
    coalitions: np.ndarray,
    chunk_rows: int = 8192,
) -> np.ndarray:
    """v(S) = mean over the background of the model on masked inputs."""
    n_coal = coalitions.shape[0]
    n_bg = background.shape[0]
    values = np.empty(n_coal * n_bg)
    # build masked inputs lazily in coalition blocks to bound memory
    coal_block = max(1, chunk_rows // max(1, n_bg))
    for start in range(0, n_coal, coal_block):
        block = coalitions[start : start + coal_block]
        stacked = _masked_inputs(instance, background, block)
        values[start * n_bg : (start + len(block)) * n_bg] = np.asarray(
            model_fn(stacked), dtype=float
        ).ravel()
    return values.reshape(n_coal, n_bg).mean(axis=1)


def _all_coalitions(m: int) -> np.ndarray:
    """All 2^m - 2 proper coalitions as a boolean matrix."""
    masks = np.arange(1, 2**m - 1, dtype=np.uint32)
    return ((masks[:, None] >> np.arange(m)) & 1).astype(bool)


def _sample_coalitions(m: int, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Paired coalition sampling, sizes drawn from the kernel's mass."""
    sizes = np.arange(1, m)
    size_weights = (m - 1) / (sizes * (m - sizes))
    size_p = size_weights / size_weights.sum()
    rows: list[np.ndarray] = []
    while len(rows) < n_samples:
        k = int(rng.choice(sizes, p=size_p))
        members = rng.choice(m, size=k, replace=False)
        z = np.zeros(m, dtype=bool)
        z[members] = True
        rows.append(z)
        rows.append(~z)
    return np.array(rows[:n_samples])


@dataclass(slots=True)
class ShapExplanation:
    """Per-feature attributions for one explained instance."""

    feature_names: tuple[str, ...]
    phi: np.ndarray
    phi0: float
    fx: float
    feature_values: np.ndarray
    n_coalition_samples: int
    exact: bool
    participant_id: int | None = None
    window_start: str | None = None

    def local_accuracy_gap(self) -> float:
        return abs(self.phi0 + float(self.phi.sum()) - self.fx)

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "phi": [float(v) for v in self.phi],
            "phi0": self.phi0,
            "fx": self.fx,
            "feature_values": [float(v) for v in self.feature_values],
            "n_coalition_samples": self.n_coalition_samples,
            "exact": self.exact,
            "participant_id": self.participant_id,
            "window_start": self.window_start,
        }


def kernel_shap(
    model_fn: ModelFn,
    instance: np.ndarray,
    background: np.ndarray,
    n_samples: int = 2048,
    seed: int = 0,
    feature_names: Sequence[str] | None = None,
    feature_values: np.ndarray | None = None,
    force_sampling: bool = False,
) -> ShapExplanation:
    """Solve for the additive attributions of one instance.

    ``instance`` has features along its last axis (a plain vector or an
    (L, F) window); ``background`` stacks reference inputs of the same
    shape. ``model_fn`` must accept a stacked batch and return one scalar
    per row. With at most 12 features all coalitions are enumerated and
    the result is exact; otherwise ``n_samples`` paired coalitions are
    sampled with ``seed``.
    """
    instance = np.asarray(instance, dtype=float)
    background = np.asarray(background, dtype=float)
    if background.ndim != instance.ndim + 1 or background.shape[1:] != instance.shape:
        raise DataError(
            f"background shape {background.shape} does not stack instances of "
            f"shape {instance.shape}"
        )
    if background.shape[0] == 0:
        raise DataError("background set is empty")
    m = instance.shape[-1]
    if m < 1:
        raise DataError("instance has no features")

    phi0 = float(np.asarray(model_fn(background), dtype=float).mean())
    fx = float(np.asarray(model_fn(instance[None]), dtype=float)[0])
    delta = fx - phi0

    names = tuple(feature_names) if feature_names else tuple(f"x{i}" for i in range(m))
    if len(names) != m:
        raise DataError(f"{len(names)} feature names for {m} features")
    if feature_values is None:
        feature_values = instance if instance.ndim == 1 else instance.mean(axis=0)

    if m == 1:
        return ShapExplanation(names, np.array([delta]), phi0, fx, feature_values, 0, True)

    exact = m <= EXACT_MAX_FEATURES and not force_sampling
    if exact:
        coalitions = _all_coalitions(m)
        weights = np.array([shapley_kernel_weight(m, int(z.sum())) for z in coalitions])
    else:
        coalitions = _sample_coalitions(m, n_samples, np.random.default_rng(seed))
        weights = np.ones(len(coalitions))

    values = _coalition_values(model_fn, instance, background, coalitions)

    # eliminate the last attribution through the local-accuracy constraint
    z = coalitions.astype(float)
    y = values - phi0 - z[:, -1] * delta
    design = z[:, :-1] - z[:, -1:]
    wd = design * weights[:, None]
    lhs = wd.T @ design
    rhs = wd.T @ y
    try:
        free = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError:
        warnings.warn("singular attribution system; applying ridge 1e-10", stacklevel=2)
        free = np.linalg.solve(lhs + 1e-10 * np.eye(m - 1), rhs)
    phi = np.append(free, delta - free.sum())
    return ShapExplanation(names, phi, phi0, fx, feature_values, len(coalitions), exact)


def exact_shap_enumeration(
    model_fn: ModelFn, instance: np.ndarray, background: np.ndarray
) -> np.ndarray:
    """Classic Shapley values by direct summation over all subsets.

    Independent of the least-squares path; used to cross-check it.
    Refuses more than 12 features (cost guard).
    """
    instance = np.asarray(instance, dtype=float)
    background = np.asarray(background, dtype=float)
    m = instance.shape[-1]
    if m > EXACT_MAX_FEATURES:
        raise ConfigError(f"{m} features exceeds the enumeration limit ({EXACT_MAX_FEATURES})")

    n_bg = background.shape[0]
    values = np.empty(2**m)
    for mask in range(2**m):
        z = np.array([(mask >> i) & 1 for i in range(m)], dtype=bool)
        stacked = np.where(z, instance, background)
        values[mask] = float(np.asarray(model_fn(stacked), dtype=float).mean())

    fact = [math.factorial(i) for i in range(m + 1)]
    phi = np.zeros(m)
    for i in range(m):
        for mask in range(2**m):
            if (mask >> i) & 1:
                continue
            s = bin(mask).count("1")
            weight = fact[s] * fact[m - s - 1] / fact[m]
            phi[i] += weight * (values[mask | (1 << i)] - values[mask])
    return phi


def forecast_model_fn(model: Model) -> ModelFn:
    """Explained scalar: the horizon-mean forecast in original units."""

    def fn(windows: np.ndarray) -> np.ndarray:
        preds = model.predict(np.asarray(windows, dtype=float))
        return preds.mean(axis=-1)

    return fn


def sample_background(
    dataset: PreparedDataset, size: int = 100, seed: int = 0
) -> list[WindowSample]:
    """Uniformly sample training windows to serve as the background set."""
    train = dataset.split_samples("train")
    if not train:
        raise DataError("no training windows available for the background set")
    rng = np.random.default_rng([seed, 0xB6])
    take = min(size, len(train))
    idx = rng.choice(len(train), size=take, replace=False)
    return [train[i] for i in sorted(idx)]


def background_fingerprint(background: Sequence[WindowSample]) -> str:
    stacked = np.ascontiguousarray(np.stack([s.inputs for s in background]), dtype="<f8")
    return hashlib.sha256(stacked.tobytes()).hexdigest()[:16]


def explain_forecast(
    model: Model,
    sample: WindowSample,
    background: Sequence[WindowSample],
    n_samples: int = 2048,
    seed: int = 0,
) -> ShapExplanation:
    """Attribute one test window's horizon-mean forecast to its features.

    The background must come from outside the test split (training
    provenance keeps the explanation free of test leakage). Displayed
    feature values are the window means in original units.
    """
    leaky = [s for s in background if s.split == "test"]
    if leaky:
        raise ProtocolError("background windows must not come from the test split")
    if model.scaler is None:
        raise DataError("model has no scaler; explanations need original units")

    bg = np.stack([s.inputs for s in background])
    display = invert_scaler(sample.inputs, model.scaler).mean(axis=0)
    explanation = kernel_shap(
        forecast_model_fn(model),
        sample.inputs,
        bg,
        n_samples=n_samples,
        seed=seed,
        feature_names=model.feature_names,
        feature_values=display,
    )
    explanation.participant_id = sample.participant_id
    explanation.window_start = sample.start_date.isoformat()
    return explanation


@dataclass(slots=True)
class GlobalImportance:
    """Mean absolute attribution per feature, ranked descending."""

    feature_names: tuple[str, ...]
    mean_abs_phi: np.ndarray
    order: np.ndarray  # feature indices, most important first
    explanations: list[ShapExplanation]

    def ranked_names(self) -> list[str]:
        return [self.feature_names[i] for i in self.order]

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "mean_abs_phi": [float(v) for v in self.mean_abs_phi],
            "ranking": self.ranked_names(),
        }


def global_aggregate(explanations: Sequence[ShapExplanation]) -> GlobalImportance:
    """Aggregate per-instance attributions into global importances."""
    if not explanations:
        raise DataError("no explanations to aggregate")
    names = explanations[0].feature_names
    for e in explanations[1:]:
        if e.feature_names != names:
            raise DataError("explanations have inconsistent feature sets")
    phis = np.stack([e.phi for e in explanations])
    mean_abs = np.abs(phis).mean(axis=0)
    order = np.argsort(-mean_abs, kind="stable")
    return GlobalImportance(names, mean_abs, order, list(explanations))


# ---------------------------------------------------------------------------
# summary plot (beeswarm SVG + companion CSV)

_COLOR_LOW = (31, 119, 180)
_COLOR_HIGH = (214, 39, 40)


def _lerp_color(t: float) -> str:
    r = round(_COLOR_LOW[0] + t * (_COLOR_HIGH[0] - _COLOR_LOW[0]))
    g = round(_COLOR_LOW[1] + t * (_COLOR_HIGH[1] - _COLOR_LOW[1]))
    b = round(_COLOR_LOW[2] + t * (_COLOR_HIGH[2] - _COLOR_LOW[2]))
    return f"#{r:02x}{g:02x}{b:02x}"


def _swarm_offsets(xs: np.ndarray, n_bins: int = 25) -> np.ndarray:
    """Deterministic vertical offsets: stack points that share an x bin."""
    offsets = np.zeros(len(xs))
    if len(xs) == 0:
        return offsets
    lo, hi = xs.min(), xs.max()
    span = hi - lo if hi > lo else 1.0
    bins = np.minimum(((xs - lo) / span * n_bins).astype(int), n_bins - 1)
    for b in np.unique(bins):
        members = np.flatnonzero(bins == b)
        for rank, idx in enumerate(members):
            step = (rank + 1) // 2
            offsets[idx] = step if rank % 2 == 1 else -step
    return offsets


def emit_summary_plot(
    explanations: Sequence[ShapExplanation],
    svg_path: str | Path,
    csv_path: str | Path | None = None,
    title: str = "Feature attribution summary",
) -> tuple[Path, Path]:
    """Write a beeswarm summary: one row per feature (most important on
    top), x = attribution with a zero reference line, point color mapped
    low-to-high feature value. Returns the SVG and CSV paths."""
    importance = global_aggregate(explanations)
    names = importance.feature_names
    order = importance.order
    m = len(names)
    n = len(explanations)

    svg_path = Path(svg_path)
    csv_path = Path(csv_path) if csv_path is not None else svg_path.with_suffix(".csv")

    phis = np.stack([e.phi for e in explanations])  # (n, m)
    values = np.stack([e.feature_values for e in explanations])

    row_h = 42
    margin_left, margin_right, margin_top, margin_bottom = 150, 110, 50, 45
    plot_w = 560
    width = margin_left + plot_w + margin_right
    height = margin_top + m * row_h + margin_bottom

    x_abs = float(np.abs(phis).max())
    x_abs = x_abs if x_abs > 0 else 1.0

    def x_pos(v: float) -> float:
        return margin_left + (v + x_abs) / (2 * x_abs) * plot_w

    svg = ET.Element(
        "svg",
        {
            "xmlns": "http://www.w3.org/2000/svg",
            "version": "1.1",
            "width": str(width),
            "height": str(height),
            "viewBox": f"0 0 {width} {height}",
        },
    )
    ET.SubElement(svg, "title").text = title
    ET.SubElement(
        svg,
        "rect",
        {"x": "0", "y": "0", "width": str(width), "height": str(height), "fill": "white"},
    )
    ET.SubElement(
        svg,
        "text",
        {"x": str(width / 2), "y": "24", "text-anchor": "middle", "font-size": "15",
         "font-family": "sans-serif"},
    ).text = title

    zero_x = x_pos(0.0)
    ET.SubElement(
        svg,
        "line",
        {"x1": str(zero_x), "y1": str(margin_top), "x2": str(zero_x),
         "y2": str(margin_top + m * row_h), "stroke": "#888888", "stroke-dasharray": "4,3"},
    )

    for row, feat_idx in enumerate(order):
        cy = margin_top + row * row_h + row_h / 2
        group = ET.SubElement(svg, "g", {"class": "feature-row", "id": f"feature-{names[feat_idx]}"})
        ET.SubElement(
            group,
            "text",
            {"x": str(margin_left - 10), "y": str(cy + 4), "text-anchor": "end",
             "font-size": "12", "font-family": "sans-serif"},
        ).text = names[feat_idx]
        ET.SubElement(
            group,
            "line",
            {"x1": str(margin_left), "y1": str(cy), "x2": str(margin_left + plot_w),
             "y2": str(cy), "stroke": "#eeeeee"},
        )
        col_vals = values[:, feat_idx]
        vlo, vhi = float(col_vals.min()), float(col_vals.max())
        vspan = vhi - vlo
        offsets = _swarm_offsets(phis[:, feat_idx])
        max_off = row_h / 2 - 5
        for i in range(n):
            t = 0.5 if vspan == 0 else (float(col_vals[i]) - vlo) / vspan
            off = float(np.clip(offsets[i] * 2.4, -max_off, max_off))
            ET.SubElement(
                group,
                "circle",
                {"cx": f"{x_pos(float(phis[i, feat_idx])):.2f}",
                 "cy": f"{cy + off:.2f}", "r": "3",
                 "fill": _lerp_color(t), "fill-opacity": "0.85"},
            )

    axis_y = margin_top + m * row_h + 8
    ET.SubElement(
        svg,
        "line",
        {"x1": str(margin_left), "y1": str(axis_y), "x2": str(margin_left + plot_w),
         "y2": str(axis_y), "stroke": "#444444"},
    )
    for v in (-x_abs, 0.0, x_abs):
        ET.SubElement(
            svg,
            "text",
            {"x": f"{x_pos(v):.2f}", "y": str(axis_y + 16), "text-anchor": "middle",
             "font-size": "11", "font-family": "sans-serif"},
        ).text = f"{v:.3g}"
    ET.SubElement(
        svg,
        "text",
        {"x": str(margin_left + plot_w / 2), "y": str(axis_y + 32),
         "text-anchor": "middle", "font-size": "12", "font-family": "sans-serif"},
    ).text = "attribution (impact on predicted daily usage, s)"

    # color legend: vertical low-to-high gradient
    defs = ET.SubElement(svg, "defs")
    grad = ET.SubElement(
        defs, "linearGradient", {"id": "valgrad", "x1": "0", "y1": "1", "x2": "0", "y2": "0"}
    )
    ET.SubElement(grad, "stop", {"offset": "0", "stop-color": _lerp_color(0.0)})
    ET.SubElement(grad, "stop", {"offset": "1", "stop-color": _lerp_color(1.0)})
    leg_x = margin_left + plot_w + 40
    leg_y = margin_top + 10
    leg_h = max(60, m * row_h - 20)
    ET.SubElement(
        svg,
        "rect",
        {"x": str(leg_x), "y": str(leg_y), "width": "12", "height": str(leg_h),
         "fill": "url(#valgrad)"},
    )
    for label, frac in (("High", 0.0), ("Low", 1.0)):
        ET.SubElement(
            svg,
            "text",
            {"x": str(leg_x + 18), "y": str(leg_y + frac * leg_h + 4),
             "font-size": "11", "font-family": "sans-serif"},
        ).text = label
    ET.SubElement(
        svg,
        "text",
        {"x": str(leg_x + 6), "y": str(leg_y - 8), "text-anchor": "middle",
         "font-size": "11", "font-family": "sans-serif"},
    ).text = "Feature value"

    ET.ElementTree(svg).write(svg_path, encoding="UTF-8", xml_declaration=True)

    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("feature,instance_index,shap_value,feature_value\n")
        for feat_idx in order:
            for i in range(n):
                fh.write(
                    f"{names[feat_idx]},{i},{phis[i, feat_idx]!r},{values[i, feat_idx]!r}\n"
                )
    return svg_path, csv_path


def write_explanations_json(
    explanations: Sequence[ShapExplanation],
    path: str | Path,
    seed: int,
    fingerprint: str,
) -> None:
    """Persist explanations plus their global aggregate as one document."""
    importance = global_aggregate(explanations)
    doc = {
        "feature_names": list(explanations[0].feature_names),
        "exact": all(e.exact for e in explanations),
        "seed": seed,
        "background_fingerprint": fingerprint,
        "explanations": [e.to_dict() for e in explanations],
        "global_importance": importance.to_dict(),
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
