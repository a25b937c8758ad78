"""Synthetic multimodal data, missingness simulation and the ``.mmjsonl`` format."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .numerics import ContractError, Rng

MODALITIES = ("a", "v", "t")
MODALITY_NAMES = {"a": "audio", "v": "video", "t": "text"}
FORMAT_HEADER = "#v1"


class MissingMask(NamedTuple):
    """Per-modality absence flags (True = missing)."""

    audio: bool = False
    video: bool = False
    text: bool = False

    @property
    def complete(self) -> bool:
        return not any(self)

    @property
    def available(self) -> tuple[str, ...]:
        return tuple(m for m, miss in zip(MODALITIES, self) if not miss)

    @property
    def name(self) -> str:
        """Table-style label listing the *available* modalities, e.g. ``{a,t}``."""
        return "{" + ",".join(self.available) + "}"

    @classmethod
    def from_name(cls, name: str) -> MissingMask:
        avail = {s.strip() for s in name.strip("{} ").split(",") if s.strip()}
        unknown = avail - set(MODALITIES)
        if unknown:
            raise ValueError(f"unknown modality letters {sorted(unknown)} in case {name!r}")
        return cls(*(m not in avail for m in MODALITIES))


def enumerate_missing_cases(n_modalities: int) -> list[tuple[bool, ...]]:
    """All availability patterns with at least one modality present.

    Ordered by number of available modalities, then lexicographically by which
    are available, so the complete case comes last. Entries are tuples of
    missing-flags.
    """
    if n_modalities < 1:
        raise ContractError(f"need at least one modality, got {n_modalities}")
    cases = []
    for k in range(1, n_modalities + 1):
        for avail in itertools.combinations(range(n_modalities), k):
            cases.append(tuple(i not in avail for i in range(n_modalities)))
    return cases


ALL_MASKS: tuple[MissingMask, ...] = tuple(MissingMask(*c) for c in enumerate_missing_cases(3))
INCOMPLETE_MASKS: tuple[MissingMask, ...] = ALL_MASKS[:-1]
COMPLETE = MissingMask()


@dataclass
class ModalityBundle:
    a: np.ndarray
    v: np.ndarray
    t: np.ndarray
    mask: MissingMask
    label: float | int

    def feature(self, m: str) -> np.ndarray:
        return getattr(self, m)


@dataclass
class Dataset:
    """Column-oriented set of samples; ``a``/``v``/``t`` are (N, L, d) float32."""

    a: np.ndarray
    v: np.ndarray
    t: np.ndarray
    masks: np.ndarray  # (N, 3) bool, True = missing
    labels: np.ndarray
    task: str = "regression"
    n_classes: int = 0

    def __post_init__(self):
        n = len(self.labels)
        for m in MODALITIES:
            arr = getattr(self, m)
            if arr.ndim != 3 or arr.shape[0] != n:
                raise SchemaError(f"modality {m!r} has shape {arr.shape}, expected ({n}, L, d)")
        if self.masks.shape != (n, 3):
            raise SchemaError(f"mask array has shape {self.masks.shape}, expected ({n}, 3)")
        if n and self.masks.all(axis=1).any():
            raise SchemaError("a sample has every modality missing")

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> ModalityBundle:
        return ModalityBundle(
            self.a[i], self.v[i], self.t[i], MissingMask(*map(bool, self.masks[i])), self.labels[i].item()
        )

    def __iter__(self) -> Iterator[ModalityBundle]:
        for i in range(len(self)):
            yield self[i]

    def feature(self, m: str) -> np.ndarray:
        return getattr(self, m)

    @property
    def complete(self) -> bool:
        return not self.masks.any()

    def subset(self, idx) -> Dataset:
        idx = np.asarray(idx)
        return replace(
            self, a=self.a[idx], v=self.v[idx], t=self.t[idx], masks=self.masks[idx], labels=self.labels[idx]
        )

    def with_masks(self, masks: np.ndarray) -> Dataset:
        """Copy with ``masks`` applied; masked payloads are zero-filled."""
        masks = np.asarray(masks, dtype=bool)
        feats = {}
        for j, m in enumerate(MODALITIES):
            arr = getattr(self, m).copy()
            arr[masks[:, j]] = 0.0
            feats[m] = arr
        return replace(self, masks=masks.copy(), **feats)

    def force_mask(self, mask: Sequence[bool]) -> Dataset:
        return self.with_masks(np.tile(np.asarray(mask, dtype=bool), (len(self), 1)))

    def equals(self, other: Dataset) -> bool:
        return (
            self.task == other.task
            and all(np.array_equal(getattr(self, m), getattr(other, m)) for m in MODALITIES)
            and np.array_equal(self.masks, other.masks)
            and np.array_equal(self.labels, other.labels)
        )


# -- synthetic generation ------------------------------------------------------


@dataclass
class SyntheticSpec:
    latent_dim: int = 8
    seq_len: tuple[int, int, int] = (24, 24, 24)
    raw_dim: tuple[int, int, int] = (20, 20, 20)
    noise: tuple[float, float, float] = (0.8, 0.8, 0.4)
    # fraction of latent factors each modality renders
    visibility: tuple[float, float, float] = (0.75, 0.75, 1.0)
    label_scale: float = 1.5
    n_train: int = 2000
    n_val: int = 500
    n_test: int = 500
    task: str = "regression"
    n_classes: int = 2
    seed: int = 0
    domain_shift: float = 0.5
    domain_shift_seed: int = 1

    def validate(self) -> None:
        if any(s < 0 for s in self.noise):
            raise ValueError(f"noise scales must be >= 0, got {self.noise}")
        if min(self.n_train, self.n_val, self.n_test) <= 0:
            raise ValueError("sample counts must be positive")
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if self.task not in ("regression", "classification"):
            raise ValueError(f"unknown task {self.task!r}")


@dataclass
class DomainMaps:
    """Per-modality rendering of the latent vector into feature sequences."""

    base: list[np.ndarray]  # (d_m, z)
    wave: list[np.ndarray]  # (d_m, z)
    freq: list[float]
    phase: list[float]
    label_w: np.ndarray  # (z,)
    class_edges: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _visibility_masks(spec: SyntheticSpec, rng: Rng) -> list[np.ndarray]:
    z = spec.latent_dim
    out = []
    for j, frac in enumerate(spec.visibility):
        k = max(1, int(round(frac * z)))
        keep = np.zeros(z)
        keep[np.sort(rng.fork("vis", j).permutation(z)[:k])] = 1.0
        out.append(keep)
    return out


def domain_maps(spec: SyntheticSpec, domain: str) -> DomainMaps:
    """Mixing maps for ``domain`` in {"pretrain", "tune"}.

    The tune domain mixes the pretrain maps with an independent draw keyed by
    ``domain_shift_seed``; the label map is shared so both domains pose the
    same task.
    """
    root = Rng(spec.seed, "maps")
    z = spec.latent_dim
    vis = _visibility_masks(spec, root)
    base, wave, freq, phase = [], [], [], []
    for j, d in enumerate(spec.raw_dim):
        r = root.fork(j)
        b = r.normal((d, z), scale=1.0 / np.sqrt(z)) * vis[j]
        w = r.normal((d, z), scale=0.5 / np.sqrt(z)) * vis[j]
        f = 1.0 + float(r.integers(0, 3))
        ph = float(r.uniform() * 2 * np.pi)
        if domain == "tune":
            s = Rng(spec.domain_shift_seed, "shift").fork(j)
            alpha = spec.domain_shift
            b = np.sqrt(1 - alpha**2) * b + alpha * s.normal((d, z), scale=1.0 / np.sqrt(z)) * vis[j]
            w = np.sqrt(1 - alpha**2) * w + alpha * s.normal((d, z), scale=0.5 / np.sqrt(z)) * vis[j]
        elif domain != "pretrain":
            raise ValueError(f"unknown domain {domain!r}")
        base.append(b)
        wave.append(w)
        freq.append(f)
        phase.append(ph)
    lw = root.fork("label").normal(z)
    lw = lw / np.linalg.norm(lw) * spec.label_scale
    edges = np.zeros(0)
    if spec.task == "classification":
        # equal-mass buckets of the (Gaussian) score
        from scipy.stats import norm

        qs = np.arange(1, spec.n_classes) / spec.n_classes
        edges = norm.ppf(qs) * spec.label_scale
    return DomainMaps(base, wave, freq, phase, lw, edges)


def render(maps: DomainMaps, spec: SyntheticSpec, z: np.ndarray, noise: np.ndarray | None = None) -> list[np.ndarray]:
    """Feature sequences for latent rows ``z`` (N, z_dim); noise is (per-modality) optional."""
    feats = []
    for j, L in enumerate(spec.seq_len):
        tt = np.arange(L)
        osc = np.sin(2 * np.pi * maps.freq[j] * tt / L + maps.phase[j])  # (L,)
        static = z @ maps.base[j].T  # (N, d)
        moving = z @ maps.wave[j].T
        x = static[:, None, :] + osc[None, :, None] * moving[:, None, :]
        if noise is not None:
            x = x + spec.noise[j] * noise[j]
        feats.append(x.astype(np.float32))
    return feats


def labels_from_latent(maps: DomainMaps, spec: SyntheticSpec, z: np.ndarray) -> np.ndarray:
    score = z @ maps.label_w
    if spec.task == "regression":
        return np.clip(score, -3.0, 3.0).astype(np.float32)
    if spec.n_classes == 2:
        return (score >= 0).astype(np.int64)
    return np.searchsorted(maps.class_edges, score).astype(np.int64)


def generate_synthetic(spec: SyntheticSpec, rng: Rng, n: int, domain: str = "tune") -> Dataset:
    """``n`` complete samples drawn from the latent factor model of ``domain``."""
    spec.validate()
    maps = domain_maps(spec, domain)
    z = rng.fork("z").normal((n, spec.latent_dim))
    eps = [rng.fork("noise", j).normal((n, L, d)) for j, (L, d) in enumerate(zip(spec.seq_len, spec.raw_dim))]
    a, v, t = render(maps, spec, z, eps)
    return Dataset(
        a=a,
        v=v,
        t=t,
        masks=np.zeros((n, 3), dtype=bool),
        labels=labels_from_latent(maps, spec, z),
        task=spec.task,
        n_classes=spec.n_classes if spec.task == "classification" else 0,
    )


def generate_splits(spec: SyntheticSpec, domain: str) -> dict[str, Dataset]:
    root = Rng(spec.seed, "data", domain)
    return {
        split: generate_synthetic(spec, root.fork(split), n, domain)
        for split, n in (("train", spec.n_train), ("val", spec.n_val), ("test", spec.n_test))
    }


def apply_missingness(
    dataset: Dataset, eta: float, rng: Rng, weights: Sequence[float] | None = None
) -> Dataset:
    """Make each sample incomplete with probability ``eta``.

    Incomplete samples draw one of the six incomplete masks (uniformly unless
    ``weights`` is given). Input must be complete.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"missing rate must lie in [0, 1], got {eta}")
    if not dataset.complete:
        raise ContractError("apply_missingness expects a complete dataset")
    n = len(dataset)
    incomplete = rng.fork("drop").uniform(n) < eta
    p = None
    if weights is not None:
        p = np.asarray(weights, dtype=float)
        p = p / p.sum()
    picks = rng.fork("case").gen.choice(len(INCOMPLETE_MASKS), size=n, p=p)
    masks = np.zeros((n, 3), dtype=bool)
    masks[incomplete] = np.asarray(INCOMPLETE_MASKS, dtype=bool)[picks[incomplete]]
    return dataset.with_masks(masks)


# -- .mmjsonl I/O ---------------------------------------------------------------


class DatasetFormatError(ValueError):
    pass


class ParseError(DatasetFormatError):
    pass


class SchemaError(DatasetFormatError):
    pass


_FIELDS = ("a", "v", "t", "mask", "label")


def save_dataset(path, dataset: Dataset) -> None:
    meta = {"task": dataset.task, "n_classes": dataset.n_classes, "n": len(dataset)}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{FORMAT_HEADER} {json.dumps(meta, sort_keys=True)}\n")
        for i in range(len(dataset)):
            lab = dataset.labels[i].item()
            rec = {
                "a": dataset.a[i].tolist(),
                "v": dataset.v[i].tolist(),
                "t": dataset.t[i].tolist(),
                "mask": [bool(b) for b in dataset.masks[i]],
                "label": lab,
            }
            fh.write(json.dumps(rec, allow_nan=False))
            fh.write("\n")


def _as_matrix(value, name: str, lineno: int) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError):
        raise SchemaError(f"line {lineno}: field {name!r} is not a rectangular float array") from None
    if arr.ndim != 2:
        raise SchemaError(f"line {lineno}: field {name!r} must be an L x d array, got shape {arr.shape}")
    return arr.astype(np.float32)


def load_dataset(path) -> Dataset:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if not lines or not lines[0].startswith(FORMAT_HEADER):
        raise ParseError(f"line 1: missing {FORMAT_HEADER!r} header")
    meta = {"task": "regression", "n_classes": 0}
    rest = lines[0][len(FORMAT_HEADER):].strip()
    if rest:
        try:
            meta.update(json.loads(rest))
        except json.JSONDecodeError as exc:
            raise ParseError(f"line 1: bad header metadata ({exc.msg})") from None
    cols: dict[str, list] = {k: [] for k in _FIELDS}
    shapes: dict[str, tuple] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"line {lineno}: {exc.msg}") from None
        if not isinstance(rec, dict):
            raise ParseError(f"line {lineno}: expected a JSON object")
        for k in _FIELDS:
            if k not in rec:
                raise SchemaError(f"line {lineno}: missing field {k!r}")
        mask = rec["mask"]
        if not (isinstance(mask, list) and len(mask) == 3 and all(isinstance(b, bool) for b in mask)):
            raise SchemaError(f"line {lineno}: field 'mask' must be three booleans")
        if all(mask):
            raise SchemaError(f"line {lineno}: every modality is missing")
        for j, m in enumerate(MODALITIES):
            arr = _as_matrix(rec[m], m, lineno)
            if m in shapes and arr.shape != shapes[m]:
                raise SchemaError(f"line {lineno}: field {m!r} has shape {arr.shape}, expected {shapes[m]}")
            shapes[m] = arr.shape
            if mask[j] and np.any(arr):
                raise SchemaError(f"line {lineno}: field {m!r} is masked but not zero-filled")
            cols[m].append(arr)
        label = rec["label"]
        if isinstance(label, bool) or not isinstance(label, (int, float)) or not np.isfinite(label):
            raise SchemaError(f"line {lineno}: field 'label' must be a finite number")
        cols["mask"].append(mask)
        cols["label"].append(label)
    task = meta["task"]
    n_classes = int(meta.get("n_classes", 0))
    if task == "classification":
        labels = np.asarray(cols["label"], dtype=np.int64)
        if len(labels) and (labels.min() < 0 or labels.max() >= n_classes):
            raise SchemaError(f"class id outside [0, {n_classes})")
    else:
        labels = np.asarray(cols["label"], dtype=np.float32)
    n = len(labels)

    def stack(m):
        if n == 0:
            return np.zeros((0, 0, 0), dtype=np.float32)
        return np.stack(cols[m])

    return Dataset(
        a=stack("a"),
        v=stack("v"),
        t=stack("t"),
        masks=np.asarray(cols["mask"], dtype=bool).reshape(n, 3),
        labels=labels,
        task=task,
        n_classes=n_classes,
    )
