"""Run configuration, training loop, evaluation, and inference helpers."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .attention import spatial_maps
from .autograd import Tensor, no_grad
from .errors import ConfigError, DataError, NumericError
from .metrics import psnr, ssim
from .network import Network, NetworkConfig, training_step
from .optim import Adam
from .pdffilter import generate_filter_diagnostics
from .sampler import sample, uniform_plan
from .synth import load_dataset
from .tensorio import (load_checkpoint, load_image, save_checkpoint,
                       save_heatmap, save_image, save_sampling_overlay)

logger = logging.getLogger(__name__)


@dataclass
class RunConfig:
    """Full run settings: the network plus harness knobs."""

    # network
    stages: int = 3
    blocks: int = 2
    patch_factor: int = 2
    channels: int = 16
    maps: int = 16
    K: int = 5
    delta_max: float = 4.0
    level_factors: tuple[int, ...] = (2, 4)
    alpha: float = 1.0
    beta: float = 0.5
    lr: float = 1e-4
    lr_halve_every: int = 2000
    mode: str = "uniform"
    rl_block: int = 1
    seed: int = 0
    # harness
    iterations: int = 5000
    batch_size: int = 2
    data: str = ""
    out: str = "runs/out"
    rl_warmup: int = 500      # iterations before stochastic plans + policy loss
    rl_weight: float = 1.0
    policy_lr_mult: float = 20.0  # lr multiplier for the sampling-policy head
    checkpoint_every: int = 1000
    log_every: int = 100

    def network_config(self) -> NetworkConfig:
        names = {f.name for f in fields(NetworkConfig)}
        return NetworkConfig(**{f.name: getattr(self, f.name)
                                for f in fields(RunConfig) if f.name in names})


_INT_KEYS = {"stages", "blocks", "patch_factor", "channels", "maps", "K",
             "lr_halve_every", "seed", "iterations", "batch_size",
             "rl_warmup", "rl_block", "checkpoint_every", "log_every"}
_FLOAT_KEYS = {"delta_max", "alpha", "beta", "lr", "rl_weight",
               "policy_lr_mult"}
_STR_KEYS = {"mode", "data", "out"}


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    """key=value lines; '#' comments; every key must be in the schema."""
    kv: dict = {}
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {ln}: expected key=value, got {line!r}")
        k, v = (t.strip() for t in line.split("=", 1))
        kv[k] = v
    if overrides:
        kv.update({k: str(v) for k, v in overrides.items() if v is not None})
    out: dict = {}
    for k, v in kv.items():
        if k in _INT_KEYS:
            out[k] = int(v)
        elif k in _FLOAT_KEYS:
            out[k] = float(v)
        elif k in _STR_KEYS:
            out[k] = v
        elif k == "level_factors":
            out[k] = tuple(int(t) for t in v.split(",") if t)
        else:
            raise ConfigError(f"unknown config key {k!r}")
    return RunConfig(**out)


def format_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(str(t) for t in v)
        lines.append(f"{f.name}={v}")
    return "\n".join(lines) + "\n"


def _as_pairs(samples: list[dict]) -> list[tuple[np.ndarray, np.ndarray]]:
    return [(s["blur"].astype(np.float32), s["sharp"].astype(np.float32))
            for s in samples]


def train(cfg: RunConfig, resume: str | None = None,
          samples: list[dict] | None = None, net: Network | None = None) -> dict:
    """Train on the dataset under cfg.data; writes checkpoints to cfg.out.

    On a non-finite loss the last finite parameter state is saved to
    `crash.ckpt` and NumericError propagates (the CLI maps it to exit 3).
    """
    if samples is None:
        samples = load_dataset(cfg.data)
    pairs = _as_pairs(samples)
    if net is None:
        net = Network(cfg.network_config())
    if resume:
        net.load_state_dict(load_checkpoint(resume))
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.txt").write_text(format_config(cfg))
    opt = Adam(net.parameters(), lr=cfg.lr,
               lr_scale={"policy.": cfg.policy_lr_mult})
    rng = np.random.default_rng(cfg.seed)
    history = []
    t0 = time.perf_counter()
    for it in range(cfg.iterations):
        idx = rng.choice(len(pairs), size=min(cfg.batch_size, len(pairs)),
                         replace=False)
        batch = [pairs[i] for i in idx]
        rl_on = cfg.mode == "nonuniform" and it >= cfg.rl_warmup
        try:
            stats = training_step(net, batch, opt, it, rl_enabled=rl_on,
                                  rng=rng, rl_weight=cfg.rl_weight)
        except NumericError:
            save_checkpoint(out_dir / "crash.ckpt", net.state_dict())
            logger.error("non-finite loss at iteration %d; saved crash.ckpt", it)
            raise
        history.append(stats["loss"])
        if cfg.log_every and it % cfg.log_every == 0:
            logger.info("iter %d loss %.5f lr %.2e%s", it, stats["loss"],
                        stats["lr"], " rl" if rl_on else "")
        if cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(out_dir / "model.ckpt", net.state_dict())
    save_checkpoint(out_dir / "model.ckpt", net.state_dict())
    return {"net": net, "loss_history": history,
            "seconds": time.perf_counter() - t0,
            "checkpoint": str(out_dir / "model.ckpt")}


def restore_image(net: Network, blur: np.ndarray) -> tuple[np.ndarray, list]:
    """Run the network on one (3,H,W) image; returns (restored, stage outs)."""
    with no_grad():
        outs = net.forward(Tensor(blur.astype(np.float32)), training=False)
    return np.clip(outs[-1].restored.data, 0.0, 1.0), outs


def evaluate(net: Network, samples: list[dict]) -> dict:
    """Mean/per-image PSNR and SSIM of the restored output and of the input."""
    rows = []
    for s in samples:
        restored, _ = restore_image(net, s["blur"])
        # quantize like the PNG writer so eval and infer report identically
        restored = np.floor(restored * 255.0 + 0.5) / 255.0
        rows.append({
            "psnr": psnr(restored, s["sharp"]),
            "ssim": ssim(restored, s["sharp"]),
            "input_psnr": psnr(s["blur"], s["sharp"]),
            "input_ssim": ssim(s["blur"], s["sharp"]),
        })
    report = {k: float(np.mean([r[k] for r in rows])) for k in rows[0]}
    report["per_image"] = rows
    report["count"] = len(rows)
    return report


def dump_maps(net: Network, blur: np.ndarray, out_dir) -> list[str]:
    """Diagnostic PNGs: probability map, sampling overlay, attention map,
    per-pixel kernel variance, and mean offset maps for the final stage."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name, fn):
        path = out_dir / name
        fn(path)
        written.append(str(path))

    restored, outs = restore_image(net, blur)
    io = outs[-1]
    if "G" in io.diagnostics:
        put("probability_map.png",
            lambda p: save_heatmap(p, io.diagnostics["G"]))
        plan = io.plans[0]
        put("sampling_overlay.png",
            lambda p: save_sampling_overlay(p, blur, plan.rows, plan.cols))
    # final-stage feature diagnostics on the full grid
    stage = net.stages[-1]
    with no_grad():
        from .nnops import conv2d
        F = conv2d(Tensor(blur.astype(np.float32)), stage.w_head, stage.b_head)
        H, W = blur.shape[1:]
        plan = uniform_plan(H, W, 1)
        blk = stage.enc[0][0]
        q = spatial_maps(sample(F, plan), blk.att).data
        put("attention_map.png",
            lambda p: save_heatmap(p, q[0].reshape(H, W)))
        diag = generate_filter_diagnostics(blk.pdf, F)
    put("kernel_variance_map.png",
        lambda p: save_heatmap(p, diag["V_variance_map"]))
    put("offset_map.png", lambda p: save_heatmap(p, diag["offset_map"]))
    return written


def infer(ckpt: str, in_path: str, out_path: str, cfg: RunConfig | None = None,
          dump_dir: str | None = None) -> np.ndarray:
    cfg = cfg or RunConfig()
    net = Network(cfg.network_config())
    net.load_state_dict(load_checkpoint(ckpt))
    try:
        blur = load_image(in_path)
    except FileNotFoundError as exc:
        raise DataError(f"cannot read input image: {exc}") from exc
    restored, _ = restore_image(net, blur)
    save_image(out_path, restored)
    if dump_dir:
        dump_maps(net, blur, dump_dir)
    return restored
