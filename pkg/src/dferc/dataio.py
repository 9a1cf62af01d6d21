"""Conversation datasets: schema, JSON Lines I/O, synthetic generation, batching.

File layout: the first line is a manifest object, every following line is
one dialogue::

    {"format": "dferc-dataset", "version": 1, "split": "train",
     "labels": ["happy", ...], "d_t": 16, "d_a": 12, "d_v": 10}
    {"dialogue_id": "d0", "utterances": [
        {"utt_id": "d0_u0", "speaker": null, "label": "sad",
         "text": [...], "audio": [...], "video": [...]}, ...]}

Files ending in ``.gz`` are read and written gzip-compressed.
"""

from __future__ import annotations

import gzip
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

FORMAT_NAME = "dferc-dataset"
FORMAT_VERSION = 1
MODALITIES = ("text", "audio", "video")

MELD_LABELS = ("neutral", "surprise", "fear", "sadness", "joy", "disgust", "anger")
IEMOCAP_LABELS = ("happy", "sad", "neutral", "angry", "excited", "frustrated")


class DatasetError(ValueError):
    """Raised when a dataset file or object violates the schema."""


@dataclass(frozen=True)
class LabelSpace:
    names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if len(self.names) < 2:
            raise DatasetError("label space needs at least two emotions")
        if len(set(self.names)) != len(self.names):
            raise DatasetError(f"duplicate emotion names in {self.names}")

    @property
    def K(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DatasetError(f"unknown label {name!r}") from None

    @classmethod
    def default(cls, K: int) -> "LabelSpace":
        if K == 6:
            return cls(IEMOCAP_LABELS)
        if K == 7:
            return cls(MELD_LABELS)
        return cls(tuple(f"emotion{k}" for k in range(K)))


@dataclass
class Utterance:
    utt_id: str
    label: int
    text: np.ndarray
    audio: np.ndarray
    video: np.ndarray
    speaker: str | None = None

    def features(self, modality: str) -> np.ndarray:
        return getattr(self, modality)


@dataclass
class Dialogue:
    dialogue_id: str
    utterances: list[Utterance]

    def __len__(self) -> int:
        return len(self.utterances)

    @property
    def labels(self) -> np.ndarray:
        return np.array([u.label for u in self.utterances], dtype=int)

    def matrix(self, modality: str) -> np.ndarray:
        return np.stack([u.features(modality) for u in self.utterances])


@dataclass
class Manifest:
    label_space: LabelSpace
    d_t: int
    d_a: int
    d_v: int
    split: str = "train"
    meta: dict = field(default_factory=dict)

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.d_t, self.d_a, self.d_v)

    def to_json(self) -> dict:
        out = {"format": FORMAT_NAME, "version": FORMAT_VERSION, "split": self.split,
               "labels": list(self.label_space.names),
               "d_t": self.d_t, "d_a": self.d_a, "d_v": self.d_v}
        if self.meta:
            out["meta"] = self.meta
        return out


@dataclass
class Dataset:
    manifest: Manifest
    dialogues: list[Dialogue]

    def __post_init__(self):
        validate_dataset(self)

    def __len__(self) -> int:
        return len(self.dialogues)

    def __iter__(self):
        return iter(self.dialogues)

    @property
    def label_space(self) -> LabelSpace:
        return self.manifest.label_space

    @property
    def n_utterances(self) -> int:
        return sum(len(d) for d in self.dialogues)

    def labels(self) -> np.ndarray:
        if not self.dialogues:
            return np.zeros(0, dtype=int)
        return np.concatenate([d.labels for d in self.dialogues])

    def label_histogram(self) -> list[int]:
        counts = Counter(int(y) for y in self.labels())
        return [counts.get(k, 0) for k in range(self.label_space.K)]


def validate_dataset(ds: Dataset) -> None:
    m = ds.manifest
    K = m.label_space.K
    seen = set()
    for d in ds.dialogues:
        if len(d.utterances) < 1:
            raise DatasetError(f"dialogue {d.dialogue_id!r} has no utterances")
        if d.dialogue_id in seen:
            raise DatasetError(f"duplicate dialogue id {d.dialogue_id!r}")
        seen.add(d.dialogue_id)
        for u in d.utterances:
            _check_utterance(u, m.dims, K)


def _check_utterance(u: Utterance, dims, K: int) -> None:
    if not 0 <= u.label < K:
        raise DatasetError(f"utterance {u.utt_id!r}: label index {u.label} outside [0, {K})")
    for mod, dim in zip(MODALITIES, dims):
        vec = u.features(mod)
        if vec is None:
            raise DatasetError(f"utterance {u.utt_id!r}: missing {mod} vector")
        if vec.ndim != 1 or vec.shape[0] != dim:
            raise DatasetError(
                f"utterance {u.utt_id!r}: {mod} vector has dim {vec.shape[-1] if vec.ndim else 0}, "
                f"manifest says {dim}")
        if not np.all(np.isfinite(vec)):
            raise DatasetError(f"utterance {u.utt_id!r}: non-finite value in {mod} vector")


# --- file I/O ----------------------------------------------------------------

def _open(path: Path, mode: str):
    if path.suffix == ".gz":
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def write_dataset(ds: Dataset, path) -> None:
    path = Path(path)
    names = ds.label_space.names
    with _open(path, "w") as fh:
        fh.write(json.dumps(ds.manifest.to_json()) + "\n")
        for d in ds.dialogues:
            rec = {"dialogue_id": d.dialogue_id, "utterances": [
                {"utt_id": u.utt_id, "speaker": u.speaker, "label": names[u.label],
                 "text": u.text.tolist(), "audio": u.audio.tolist(), "video": u.video.tolist()}
                for u in d.utterances]}
            fh.write(json.dumps(rec) + "\n")


def _parse_manifest(obj, where: str) -> Manifest:
    if not isinstance(obj, dict) or obj.get("format") != FORMAT_NAME:
        raise DatasetError(f"{where}: first line is not a {FORMAT_NAME} manifest")
    if obj.get("version") != FORMAT_VERSION:
        raise DatasetError(f"{where}: unsupported format version {obj.get('version')!r}")
    try:
        labels = LabelSpace(tuple(obj["labels"]))
        dims = [int(obj[k]) for k in ("d_t", "d_a", "d_v")]
    except KeyError as exc:
        raise DatasetError(f"{where}: manifest missing field {exc.args[0]!r}") from None
    if min(dims) < 1:
        raise DatasetError(f"{where}: feature dims must be positive, got {dims}")
    return Manifest(labels, *dims, split=str(obj.get("split", "train")), meta=obj.get("meta", {}))


def _parse_dialogue(obj, manifest: Manifest, where: str) -> Dialogue:
    if not isinstance(obj, dict):
        raise DatasetError(f"{where}: dialogue record must be an object")
    try:
        did = str(obj["dialogue_id"])
        raw_utts = obj["utterances"]
    except KeyError as exc:
        raise DatasetError(f"{where}: missing field {exc.args[0]!r}") from None
    utts = []
    for j, u in enumerate(raw_utts):
        uid = str(u.get("utt_id", f"{did}#{j}"))
        label = u.get("label")
        if isinstance(label, str):
            try:
                idx = manifest.label_space.index(label)
            except DatasetError:
                raise DatasetError(f"{where}: utterance {uid!r}: unknown label {label!r}") from None
        elif isinstance(label, int) and not isinstance(label, bool):
            idx = label
        else:
            raise DatasetError(f"{where}: utterance {uid!r}: malformed label {label!r}")
        vecs = {}
        for mod in MODALITIES:
            if mod not in u or u[mod] is None:
                raise DatasetError(f"{where}: utterance {uid!r}: missing {mod} vector")
            try:
                vecs[mod] = np.asarray(u[mod], dtype=np.float64)
            except (TypeError, ValueError):
                raise DatasetError(f"{where}: utterance {uid!r}: malformed {mod} vector") from None
        utt = Utterance(uid, idx, vecs["text"], vecs["audio"], vecs["video"], u.get("speaker"))
        try:
            _check_utterance(utt, manifest.dims, manifest.label_space.K)
        except DatasetError as exc:
            raise DatasetError(f"{where}: {exc}") from None
        utts.append(utt)
    if not utts:
        raise DatasetError(f"{where}: dialogue {did!r} has no utterances")
    return Dialogue(did, utts)


def load_dataset(path) -> Dataset:
    """Read and fully validate a dataset file; any violation rejects the whole file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    dialogues = []
    manifest = None
    with _open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            where = f"{path}:{lineno}"
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{where}: malformed JSON ({exc.msg})") from None
            if manifest is None:
                manifest = _parse_manifest(obj, where)
            else:
                dialogues.append(_parse_dialogue(obj, manifest, where))
    if manifest is None:
        raise DatasetError(f"{path}: empty file")
    ds = Dataset(manifest, dialogues)
    emitted = manifest.meta.get("label_counts")
    if emitted is not None and list(emitted) != ds.label_histogram():
        raise DatasetError(f"{path}: label histogram disagrees with manifest label_counts")
    return ds


# --- synthetic data ------------------------------------------------------------

_SPLIT_CODES = {"train": 0, "valid": 1, "test": 2}


@dataclass
class SynthConfig:
    """Planted-structure conversational data.

    Each (emotion, modality) pair owns a latent mean drawn once from the seed.
    Emotions follow a first-order Markov chain; a modality whose reliability
    coin fails mixes in another class's latent; with probability
    ``inconsistency`` one modality is replaced by a wrong class's latent.
    """

    K: int = 6
    d_t: int = 16
    d_a: int = 12
    d_v: int = 10
    n_train: int = 300
    n_valid: int = 60
    n_test: int = 60
    mean_length: float = 8.0
    max_length: int = 110
    p_stay: float = 0.7
    reliability: tuple[float, float, float] = (0.9, 0.6, 0.5)
    sigma: float = 0.4
    inconsistency: float = 0.2
    latent_scale: float = 0.25
    seed: int = 0

    def __post_init__(self):
        self.reliability = tuple(float(r) for r in self.reliability)
        if self.K < 2:
            raise ValueError("K must be at least 2")
        if min(self.d_t, self.d_a, self.d_v) < 1:
            raise ValueError("feature dims must be positive")
        if len(self.reliability) != 3:
            raise ValueError("reliability needs one value per modality")
        for name, v in (("p_stay", self.p_stay), ("inconsistency", self.inconsistency)):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if any(not 0.0 <= r <= 1.0 for r in self.reliability):
            raise ValueError(f"reliability values must lie in [0, 1], got {self.reliability}")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.latent_scale > 0:
            raise ValueError("latent_scale must be positive")
        if self.mean_length < 1 or self.max_length < 1:
            raise ValueError("dialogue lengths must be at least 1")
        for name in ("n_train", "n_valid", "n_test"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.d_t, self.d_a, self.d_v)

    def split_size(self, split: str) -> int:
        return getattr(self, f"n_{split}")


def synthetic_latents(cfg: SynthConfig) -> list[np.ndarray]:
    """Per-modality ``[K, d_m]`` latent class means."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 7919]))
    return [cfg.latent_scale * rng.standard_normal((cfg.K, d)) for d in cfg.dims]


def generate_synthetic(cfg: SynthConfig, split: str = "train") -> Dataset:
    if split not in _SPLIT_CODES:
        raise ValueError(f"unknown split {split!r}")
    latents = synthetic_latents(cfg)
    K = cfg.K
    counts = [0] * K
    dialogues = []
    for idx in range(cfg.split_size(split)):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _SPLIT_CODES[split], idx]))
        n = min(cfg.max_length, 1 + int(rng.poisson(cfg.mean_length - 1.0)))
        k = int(rng.integers(K))
        utts = []
        for j in range(n):
            if j > 0 and rng.random() >= cfg.p_stay:
                k = _other_class(rng, K, k)
            counts[k] += 1
            feats = []
            for m, (mu, r) in enumerate(zip(latents, cfg.reliability)):
                if rng.random() < r:
                    vec = mu[k].copy()
                else:
                    k2 = int(rng.integers(K))
                    vec = r * mu[k] + (1.0 - r) * mu[k2]
                feats.append(vec)
            if rng.random() < cfg.inconsistency:
                m = int(rng.integers(3))
                feats[m] = latents[m][_other_class(rng, K, k)].copy()
            feats = [f + cfg.sigma * rng.standard_normal(f.shape[0]) for f in feats]
            utts.append(Utterance(f"{split}{idx}_u{j}", k, *feats))
        dialogues.append(Dialogue(f"{split}{idx}", utts))
    manifest = Manifest(LabelSpace.default(K), *cfg.dims, split=split,
                        meta={"generator": "synthetic", "seed": cfg.seed, "label_counts": counts})
    return Dataset(manifest, dialogues)


def generate_splits(cfg: SynthConfig) -> dict[str, Dataset]:
    return {s: generate_synthetic(cfg, s) for s in ("train", "valid", "test")}


def _other_class(rng, K: int, k: int) -> int:
    j = int(rng.integers(K - 1))
    return j + 1 if j >= k else j


# --- batching -------------------------------------------------------------------

def batch_dialogues(ds: Dataset | list[Dialogue], batch_size: int, seed: int | None = 0,
                    epoch: int = 0) -> Iterator[list[Dialogue]]:
    """Yield batches of whole dialogues; ``seed=None`` keeps file order."""
    dialogues = list(ds.dialogues if isinstance(ds, Dataset) else ds)
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    if not dialogues:
        raise DatasetError("cannot batch an empty dataset")
    order = np.arange(len(dialogues))
    if seed is not None:
        np.random.default_rng(np.random.SeedSequence([seed, epoch])).shuffle(order)
    for start in range(0, len(order), batch_size):
        yield [dialogues[i] for i in order[start:start + batch_size]]


def n_batches(n_dialogues: int, batch_size: int) -> int:
    return math.ceil(n_dialogues / batch_size)
