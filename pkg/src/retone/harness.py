"""Dataset preparation, the training loop, checkpointing, and evaluation.

Training pairs are seeded random crops: the target is the original crop and
the input is its degraded version (bit compression or halftoning), both
normalized to [0, 1]. Compression uses the truncation-grid values directly,
not their display-rescaled form. Everything downstream of (seed, corpus,
config) is deterministic, and the crops for sample i depend only on
(seed, i), so a resumed run continues the exact sample stream of an
uninterrupted one.
"""

from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from retone.companding import compress_bits
from retone.errors import NumericsError, ParameterError, WeightsFormatError
from retone.halftone import floyd_steinberg
from retone.image_io import Image, from_tensor, load_image, to_tensor
from retone.metrics import psnr, ssim
from retone.nn.adam import AdamState, adam_step
from retone.perceptual import TAP_NAMES, FeatureNet, perceptual_loss
from retone.unet import (
    UNetConfig,
    UNetParams,
    build_unet,
    params_from_tensors,
    unet_backward,
    unet_forward,
    weights_tensors,
)
from retone.weights_io import read_nnwt, write_nnwt

logger = logging.getLogger(__name__)

CORPUS_SUFFIXES = (".png", ".pgm", ".ppm")


@dataclass
class DegradationSpec:
    """What the network must undo: bit compression or halftoning."""

    kind: str  # "compand" | "halftone"
    channels: str = "color"  # "color" | "gray"
    bits: int | None = None

    def __post_init__(self):
        if self.kind not in ("compand", "halftone"):
            raise ParameterError(f"unknown degradation kind {self.kind!r}")
        if self.channels not in ("color", "gray"):
            raise ParameterError(f"channels must be 'color' or 'gray', got {self.channels!r}")
        if self.kind == "compand":
            if self.bits is None or not (1 <= self.bits <= 5):
                raise ParameterError(f"compand bits must be in 1..5, got {self.bits}")
        elif self.bits is not None:
            raise ParameterError("halftone takes no bits parameter")

    @classmethod
    def parse(cls, text: str) -> "DegradationSpec":
        """Parse strings like "compand:3:color" or "halftone:gray"."""
        parts = text.strip().lower().split(":")
        kind = parts[0]
        bits = None
        channels = "color"
        for part in parts[1:]:
            if part.isdigit():
                bits = int(part)
            elif part:
                channels = part
        return cls(kind=kind, channels=channels, bits=bits)

    def __str__(self) -> str:
        if self.kind == "compand":
            return f"compand:{self.bits}:{self.channels}"
        return f"halftone:{self.channels}"

    def apply(self, img: Image) -> Image:
        if self.kind == "compand":
            return compress_bits(img, self.bits)
        return floyd_steinberg(img)

    @property
    def image_channels(self) -> int:
        return 1 if self.channels == "gray" else 3


@dataclass
class TrainingConfig:
    """Hyperparameters for one training run.

    Defaults are desk scale; ``paper_scale()`` records the full-size recipe
    (256px inputs, batch 16, 30000 iterations, learning rate 2e-4, conv
    taps on a pretrained extractor).
    """

    spec: DegradationSpec = field(default_factory=lambda: DegradationSpec("compand", "color", 3))
    patch_size: int = 64
    batch_size: int = 16
    iterations: int = 2000
    learning_rate: float = 2e-4
    loss_tap: str = "conv1_1"
    seed: int = 0
    depth: int = 2
    base_channels: int = 16
    channel_cap: int = 256
    phi_source: str = "random"  # "random" or a path to an NNWT container
    phi_width_scale: float = 1.0
    log_every: int = 50
    checkpoint_every: int = 0  # 0 disables periodic saves

    def __post_init__(self):
        if self.loss_tap not in TAP_NAMES:
            raise ParameterError(f"loss_tap must be one of {TAP_NAMES}, got {self.loss_tap!r}")
        if self.patch_size % (1 << self.depth):
            raise ParameterError(
                f"patch_size {self.patch_size} must be divisible by 2**depth = {1 << self.depth}"
            )
        pool_factor = 1 << TAP_NAMES.index(self.loss_tap)
        if self.patch_size % pool_factor:
            raise ParameterError(
                f"patch_size {self.patch_size} must be divisible by the {self.loss_tap} "
                f"pool factor {pool_factor}"
            )
        if self.iterations < 0 or self.batch_size < 1:
            raise ParameterError("iterations must be >= 0 and batch_size >= 1")

    @classmethod
    def paper_scale(cls, spec: DegradationSpec) -> "TrainingConfig":
        return cls(
            spec=spec,
            patch_size=256,
            batch_size=16,
            iterations=30000,
            learning_rate=2e-4,
            depth=4,
            base_channels=64,
        )

    def unet_config(self) -> UNetConfig:
        c = self.spec.image_channels
        return UNetConfig(
            depth=self.depth,
            base_channels=self.base_channels,
            in_channels=c,
            out_channels=c,
            channel_cap=self.channel_cap,
        )

    def build_phi(self) -> FeatureNet:
        if self.phi_source == "random":
            # derived, not equal to the weight seed: phi must stay fixed and
            # distinct from the transformation network's initialization stream
            return FeatureNet.random(seed=self.seed + 7919, width_scale=self.phi_width_scale)
        return FeatureNet.from_nnwt(self.phi_source)

    def to_text(self) -> str:
        lines = [
            f"task = {self.spec.kind}",
            f"channels = {self.spec.channels}",
        ]
        if self.spec.bits is not None:
            lines.append(f"bits = {self.spec.bits}")
        lines += [
            f"patch_size = {self.patch_size}",
            f"batch_size = {self.batch_size}",
            f"iterations = {self.iterations}",
            f"learning_rate = {self.learning_rate!r}",
            f"loss_tap = {self.loss_tap}",
            f"seed = {self.seed}",
            f"depth = {self.depth}",
            f"base_channels = {self.base_channels}",
            f"channel_cap = {self.channel_cap}",
            f"phi_source = {self.phi_source}",
            f"phi_width_scale = {self.phi_width_scale!r}",
            f"log_every = {self.log_every}",
            f"checkpoint_every = {self.checkpoint_every}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "TrainingConfig":
        values = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParameterError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
        return cls.from_mapping(values, source)

    @classmethod
    def from_file(cls, path) -> "TrainingConfig":
        return cls.from_text(Path(path).read_text(), source=str(path))

    @classmethod
    def from_mapping(cls, values: dict, source: str = "<config>") -> "TrainingConfig":
        values = dict(values)

        def pop(key, conv, default):
            if key in values:
                raw = values.pop(key)
                try:
                    return conv(raw)
                except ValueError:
                    raise ParameterError(f"{source}: bad value for {key}: {raw!r}") from None
            return default

        kind = pop("task", str, "compand")
        channels = pop("channels", str, "color")
        bits = pop("bits", int, 3 if kind == "compand" else None)
        spec = DegradationSpec(kind=kind, channels=channels, bits=bits)
        cfg = cls(
            spec=spec,
            patch_size=pop("patch_size", int, 64),
            batch_size=pop("batch_size", int, 16),
            iterations=pop("iterations", int, 2000),
            learning_rate=pop("learning_rate", float, 2e-4),
            loss_tap=pop("loss_tap", str, "conv1_1"),
            seed=pop("seed", int, 0),
            depth=pop("depth", int, 2),
            base_channels=pop("base_channels", int, 16),
            channel_cap=pop("channel_cap", int, 256),
            phi_source=pop("phi_source", str, "random"),
            phi_width_scale=pop("phi_width_scale", float, 1.0),
            log_every=pop("log_every", int, 50),
            checkpoint_every=pop("checkpoint_every", int, 0),
        )
        if values:
            raise ParameterError(f"{source}: unknown config keys {sorted(values)}")
        return cfg

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()[:16]


# --------------------------------------------------------------------------
# corpus loading and pair sampling


def to_channels(img: Image, channels: str) -> Image:
    """Match an image to the requested channel layout (color -> gray via luma)."""
    want = 1 if channels == "gray" else 3
    if img.channels == want:
        return img
    if want == 1:
        rgb = img.data.astype(np.float64)
        luma = 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]
        return Image.from_array(np.floor(luma + 0.5).astype(np.uint8)[:, :, None])
    return Image.from_array(np.repeat(img.data, 3, axis=2))


def load_corpus(corpus_dir, channels: str, min_size: int | None = None) -> tuple[list[Image], int]:
    """Load every supported file, channel-matched; returns (images, skipped)."""
    paths = sorted(
        p for p in Path(corpus_dir).iterdir() if p.suffix.lower() in CORPUS_SUFFIXES
    )
    if not paths:
        raise ParameterError(f"{corpus_dir}: no corpus images ({'/'.join(CORPUS_SUFFIXES)})")
    images = []
    skipped = 0
    for p in paths:
        img = to_channels(load_image(p), channels)
        if min_size is not None and min(img.width, img.height) < min_size:
            skipped += 1
            continue
        images.append(img)
    if skipped:
        logger.warning("skipped %d undersized images in %s", skipped, corpus_dir)
    if not images:
        raise ParameterError(f"{corpus_dir}: every image is smaller than {min_size}px")
    return images, skipped


def corpus_files(corpus_dir) -> list[Path]:
    return sorted(p for p in Path(corpus_dir).iterdir() if p.suffix.lower() in CORPUS_SUFFIXES)


def _sample_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1, index)))


def sample_pair(images: list[Image], spec: DegradationSpec, patch_size: int, seed: int, index: int):
    """Crop/degrade the sample at stream position ``index`` (pure in its args)."""
    rng = _sample_rng(seed, index)
    img = images[int(rng.integers(len(images)))]
    y0 = int(rng.integers(img.height - patch_size + 1))
    x0 = int(rng.integers(img.width - patch_size + 1))
    crop = Image.from_array(img.data[y0 : y0 + patch_size, x0 : x0 + patch_size])
    degraded = spec.apply(crop)
    return to_tensor(degraded), to_tensor(crop)


def make_pairs(corpus_dir, spec: DegradationSpec, patch_size: int, seed: int, count: int | None = None):
    """Yield (input, target) tensor pairs from seeded random crops."""
    images, _ = load_corpus(corpus_dir, spec.channels, min_size=patch_size)
    index = 0
    while count is None or index < count:
        yield sample_pair(images, spec, patch_size, seed, index)
        index += 1


def _batch(images, cfg: TrainingConfig, iteration: int):
    xs, ys = [], []
    base = iteration * cfg.batch_size
    for k in range(cfg.batch_size):
        x, y = sample_pair(images, cfg.spec, cfg.patch_size, cfg.seed, base + k)
        xs.append(x)
        ys.append(y)
    return np.concatenate(xs, axis=0), np.concatenate(ys, axis=0)


# --------------------------------------------------------------------------
# checkpointing


@dataclass
class Checkpoint:
    """Weights, optimizer moments, and stream position of a training run."""

    params: UNetParams
    adam: AdamState
    config: TrainingConfig
    iteration: int
    loss_history: list = field(default_factory=list)

    def save(self, path) -> None:
        tensors = weights_tensors(self.params)
        for name, m in self.adam.m.items():
            tensors[f"adam.m.{name}"] = m
            tensors[f"adam.v.{name}"] = self.adam.v[name]
        write_nnwt(path, tensors)
        meta = [
            "format = retone-checkpoint-v1",
            f"fingerprint = {self.config.fingerprint()}",
            f"iteration = {self.iteration}",
            f"adam_t = {self.adam.t}",
            f"loss_history = {','.join(repr(v) for v in self.loss_history)}",
            "",
            "# training configuration",
            self.config.to_text().rstrip(),
        ]
        Path(str(path) + ".meta").write_text("\n".join(meta) + "\n")

    @classmethod
    def load(cls, path) -> "Checkpoint":
        meta_path = Path(str(path) + ".meta")
        if not meta_path.exists():
            raise WeightsFormatError(f"{meta_path}: missing checkpoint header")
        header: dict[str, str] = {}
        config_lines = []
        in_config = False
        for line in meta_path.read_text().splitlines():
            if line.strip() == "# training configuration":
                in_config = True
                continue
            if in_config:
                config_lines.append(line)
            elif "=" in line:
                key, _, value = line.partition("=")
                header[key.strip()] = value.strip()
        if header.get("format") != "retone-checkpoint-v1":
            raise WeightsFormatError(f"{meta_path}: unrecognized checkpoint header")
        config = TrainingConfig.from_text("\n".join(config_lines), source=str(meta_path))
        if config.fingerprint() != header.get("fingerprint"):
            raise WeightsFormatError(f"{meta_path}: config fingerprint mismatch")
        tensors = read_nnwt(path)
        weight_tensors = {k: v for k, v in tensors.items() if not k.startswith("adam.")}
        params = params_from_tensors(weight_tensors, source=str(path))
        adam = AdamState(lr=config.learning_rate, t=int(header.get("adam_t", "0")))
        for name, value in tensors.items():
            if name.startswith("adam.m."):
                pname = name[len("adam.m.") :]
                adam.m[pname] = value.copy()
                adam.v[pname] = tensors[f"adam.v.{pname}"].copy()
        history = [float(tok) for tok in header.get("loss_history", "").split(",") if tok]
        return cls(
            params=params,
            adam=adam,
            config=config,
            iteration=int(header.get("iteration", "0")),
            loss_history=history,
        )


# --------------------------------------------------------------------------
# training


def train(
    cfg: TrainingConfig,
    corpus_dir,
    resume: Checkpoint | None = None,
    out_path=None,
) -> Checkpoint:
    """Run (or continue) a training loop; returns the final checkpoint.

    With ``cfg.checkpoint_every`` > 0 and an ``out_path``, the checkpoint
    file is refreshed periodically so an interrupted run can resume.
    """
    images, _ = load_corpus(corpus_dir, cfg.spec.channels, min_size=cfg.patch_size)
    phi = cfg.build_phi()
    if resume is not None:
        if resume.config.fingerprint() != cfg.fingerprint():
            raise ParameterError("resume checkpoint was trained with a different configuration")
        params = resume.params
        adam = resume.adam
        start = resume.iteration
        history = list(resume.loss_history)
    else:
        params = build_unet(cfg.unet_config(), seed=cfg.seed)
        adam = AdamState(lr=cfg.learning_rate)
        start = 0
        history = []
    trainable = params.trainable()
    t0 = time.perf_counter()
    for it in range(start, cfg.iterations):
        x, y = _batch(images, cfg, it)
        out, cache = unet_forward(params, x, mode="train")
        loss, grad_out = perceptual_loss(phi, out, y, cfg.loss_tap)
        if not np.isfinite(loss):
            norms = {k: float(np.abs(v).max()) for k, v in list(trainable.items())[:4]}
            raise NumericsError(
                f"non-finite loss {loss!r} at iteration {it} (param scale sample: {norms})"
            )
        grads, _ = unet_backward(params, cache, grad_out)
        adam_step(trainable, grads, adam)
        history.append(loss)
        if cfg.log_every and ((it + 1) % cfg.log_every == 0 or it == start):
            rate = (it + 1 - start) / max(time.perf_counter() - t0, 1e-9)
            logger.info("iter %d/%d  loss %.6f  (%.1f it/s)", it + 1, cfg.iterations, loss, rate)
        if out_path and cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0:
            Checkpoint(params=params, adam=adam, config=cfg, iteration=it + 1, loss_history=history).save(out_path)
    return Checkpoint(params=params, adam=adam, config=cfg, iteration=cfg.iterations, loss_history=history)


# --------------------------------------------------------------------------
# inference and evaluation


def _pad_reflect(img: Image, factor: int) -> tuple[Image, int, int]:
    pad_h = (-img.height) % factor
    pad_w = (-img.width) % factor
    if pad_h == 0 and pad_w == 0:
        return img, 0, 0
    data = np.pad(img.data, ((0, pad_h), (0, pad_w), (0, 0)), mode="reflect")
    return Image.from_array(data, bit_depth=img.bit_depth), pad_h, pad_w


def expand(ckpt: Checkpoint, img: Image) -> Image:
    """Restore an image with a trained network (eval mode, full resolution)."""
    factor = 1 << ckpt.params.cfg.depth
    img = to_channels(img, ckpt.config.spec.channels)
    padded, pad_h, pad_w = _pad_reflect(img, factor)
    out, _ = unet_forward(ckpt.params, to_tensor(padded), mode="eval")
    restored = from_tensor(out)
    if pad_h or pad_w:
        data = restored.data[: restored.height - pad_h, : restored.width - pad_w]
        restored = Image.from_array(data)
    return restored


@dataclass
class EvalRow:
    name: str
    psnr_degraded: float
    ssim_degraded: float
    psnr_restored: float
    ssim_restored: float


@dataclass
class EvalReport:
    """Per-image and mean quality for degraded and restored images."""

    spec: DegradationSpec
    rows: list

    COLUMNS = ("filename", "psnr_degraded", "ssim_degraded", "psnr_restored", "ssim_restored")

    def mean(self) -> EvalRow:
        def avg(attr):
            return float(np.mean([getattr(r, attr) for r in self.rows]))

        return EvalRow(
            "mean", avg("psnr_degraded"), avg("ssim_degraded"), avg("psnr_restored"), avg("ssim_restored")
        )

    def degraded_label(self) -> str:
        return "Compressed" if self.spec.kind == "compand" else "Halftone"

    def restored_label(self) -> str:
        return "Expanded" if self.spec.kind == "compand" else "CNN Inverse"

    def to_text(self) -> str:
        dl, rl = self.degraded_label(), self.restored_label()
        lines = [
            f"degradation: {self.spec}",
            f"{'image':<16s} {dl + ' PSNR':>16s} {dl + ' SSIM':>16s} {rl + ' PSNR':>16s} {rl + ' SSIM':>16s}",
        ]
        for r in [*self.rows, self.mean()]:
            lines.append(
                f"{r.name:<16s} {r.psnr_degraded:>16.2f} {r.ssim_degraded:>16.4f} "
                f"{r.psnr_restored:>16.2f} {r.ssim_restored:>16.4f}"
            )
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        lines = [",".join(self.COLUMNS)]
        for r in [*self.rows, self.mean()]:
            lines.append(
                f"{r.name},{r.psnr_degraded:.6f},{r.ssim_degraded:.6f},"
                f"{r.psnr_restored:.6f},{r.ssim_restored:.6f}"
            )
        return "\n".join(lines) + "\n"


def evaluate(ckpt: Checkpoint, corpus_dir, spec: DegradationSpec | None = None) -> EvalReport:
    """Degrade each corpus image, restore it, and score both against the original."""
    if spec is None:
        spec = ckpt.config.spec
    if str(spec) != str(ckpt.config.spec):
        raise ParameterError(
            f"checkpoint was trained for {ckpt.config.spec}, evaluation requested {spec}"
        )
    rows = []
    for path in corpus_files(corpus_dir):
        original = to_channels(load_image(path), spec.channels)
        degraded = spec.apply(original)
        restored = expand(ckpt, degraded)
        rows.append(
            EvalRow(
                name=path.name,
                psnr_degraded=psnr(original, degraded),
                ssim_degraded=ssim(original, degraded),
                psnr_restored=psnr(original, restored),
                ssim_restored=ssim(original, restored),
            )
        )
    if not rows:
        raise ParameterError(f"{corpus_dir}: no corpus images")
    return EvalReport(spec=spec, rows=rows)


# --------------------------------------------------------------------------
# loss-layer comparison


@dataclass
class StudyRow:
    tap: str
    psnr_degraded: float
    ssim_degraded: float
    psnr_restored: float
    ssim_restored: float


@dataclass
class StudyReport:
    """Mean quality per loss tap, same degradation and budget for every row."""

    spec: DegradationSpec
    rows: list

    def to_text(self) -> str:
        lines = [
            f"degradation: {self.spec}",
            f"{'loss layer':<12s} {'Degraded PSNR':>14s} {'Degraded SSIM':>14s} {'Restored PSNR':>14s} {'Restored SSIM':>14s}",
        ]
        for r in self.rows:
            lines.append(
                f"{r.tap:<12s} {r.psnr_degraded:>14.2f} {r.ssim_degraded:>14.4f} "
                f"{r.psnr_restored:>14.2f} {r.ssim_restored:>14.4f}"
            )
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        lines = ["loss_tap,psnr_degraded,ssim_degraded,psnr_restored,ssim_restored"]
        for r in self.rows:
            lines.append(
                f"{r.tap},{r.psnr_degraded:.6f},{r.ssim_degraded:.6f},"
                f"{r.psnr_restored:.6f},{r.ssim_restored:.6f}"
            )
        return "\n".join(lines) + "\n"


def layer_study(base_cfg: TrainingConfig, corpus_dir, eval_dir, taps=("conv1_1", "conv3_1")) -> StudyReport:
    """Train one model per loss tap under an identical budget and compare."""
    from dataclasses import replace

    rows = []
    for tap in taps:
        cfg = replace(base_cfg, loss_tap=tap)
        logger.info("layer study: training %s variant", tap)
        ckpt = train(cfg, corpus_dir)
        report = evaluate(ckpt, eval_dir)
        m = report.mean()
        rows.append(StudyRow(tap, m.psnr_degraded, m.ssim_degraded, m.psnr_restored, m.ssim_restored))
    return StudyReport(spec=base_cfg.spec, rows=rows)
