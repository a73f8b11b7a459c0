"""Synthetic spatially-varying motion-blur data.

Images are blurred with linear-motion kernels that differ per rectangular
region; region borders are cross-faded over a 5-pixel ramp so the blur field
is piecewise smooth. Each sample carries its generating spec (and a per-pixel
kernel-length map derived from it) so downstream analysis can compare learned
behaviour against the true local blur strength.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import BlurSpecError, DataError

RAMP = 5  # cross-fade width at region borders, pixels


@dataclass
class BlurRegion:
    box: tuple[int, int, int, int]  # r0, c0, r1, c1 (half-open)
    angle: float                    # radians
    length: float                   # pixels, >= 1


@dataclass
class BlurFieldSpec:
    regions: list[BlurRegion]
    bg_angle: float = 0.0
    bg_length: float = 1.0
    seed: int = 0

    def validate(self, H: int, W: int) -> None:
        for i, reg in enumerate(self.regions):
            r0, c0, r1, c1 = reg.box
            if not (0 <= r0 < r1 <= H and 0 <= c0 < c1 <= W):
                raise BlurSpecError(f"region {i} box {reg.box} outside {H}x{W}")
            if reg.length < 1:
                raise BlurSpecError(f"region {i} length {reg.length} < 1")
            for j, other in enumerate(self.regions[:i]):
                q0, d0, q1, d1 = other.box
                if r0 < q1 and q0 < r1 and c0 < d1 and d0 < c1:
                    raise BlurSpecError(f"regions {j} and {i} overlap")
        if self.bg_length < 1:
            raise BlurSpecError(f"background length {self.bg_length} < 1")


@dataclass
class SynthSample:
    sharp: np.ndarray    # (3, H, W) in [0,1]
    blurred: np.ndarray  # (3, H, W) in [0,1]
    spec: BlurFieldSpec


def make_linear_kernel(angle: float, length: float) -> np.ndarray:
    """Anti-aliased linear-motion kernel, odd-sized, normalized to sum 1."""
    if length < 1:
        raise BlurSpecError(f"kernel length {length} < 1")
    k = int(math.ceil(length))
    if k % 2 == 0:
        k += 1
    if length <= 1:
        return np.ones((1, 1))
    ker = np.zeros((k, k))
    c = k // 2
    half = (length - 1) / 2.0
    # dense samples along the segment, deposited bilinearly
    n = max(2, int(math.ceil(length * 16)))
    ts = np.linspace(-half, half, n)
    ys = c + ts * math.sin(angle)
    xs = c + ts * math.cos(angle)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    fy = ys - y0
    fx = xs - x0
    for dy in (0, 1):
        for dx in (0, 1):
            w = (fy if dy else 1 - fy) * (fx if dx else 1 - fx)
            np.add.at(ker, (np.clip(y0 + dy, 0, k - 1), np.clip(x0 + dx, 0, k - 1)), w)
    return ker / ker.sum()


def _blend_weights(spec: BlurFieldSpec, H: int, W: int) -> list[np.ndarray]:
    """Per-region cross-fade weights: 1 deep inside a box, linear ramp to 0
    at its border (ramp runs inside the box so regions never bleed out)."""
    maps = []
    rr = np.arange(H)[:, None]
    cc = np.arange(W)[None, :]
    for reg in spec.regions:
        r0, c0, r1, c1 = reg.box
        dr = np.minimum(rr - r0, (r1 - 1) - rr)
        dc = np.minimum(cc - c0, (c1 - 1) - cc)
        d = np.minimum(dr, dc)
        w = np.clip((d + 1) / RAMP, 0.0, 1.0)
        w[d < 0] = 0.0
        maps.append(w)
    return maps


def synthesize(sharp: np.ndarray, spec: BlurFieldSpec) -> SynthSample:
    """Blur each region with its own kernel and cross-fade at borders."""
    C, H, W = sharp.shape
    spec.validate(H, W)
    weights = _blend_weights(spec, H, W)
    kernels = [make_linear_kernel(r.angle, r.length) for r in spec.regions]
    kernels.append(make_linear_kernel(spec.bg_angle, spec.bg_length))
    bg_w = 1.0 - np.sum(weights, axis=0) if weights else np.ones((H, W))
    weights = weights + [bg_w]
    out = np.zeros_like(sharp, dtype=np.float64)
    for ker, w in zip(kernels, weights):
        if w.max() <= 0:
            continue
        if ker.size == 1:
            blurred = sharp.astype(np.float64)
        else:
            blurred = np.stack([
                ndimage.convolve(sharp[ch].astype(np.float64), ker, mode="nearest")
                for ch in range(C)
            ])
        out += w[None] * blurred
    out = np.clip(out, 0.0, 1.0).astype(sharp.dtype)
    return SynthSample(sharp=sharp, blurred=out, spec=spec)


def degradation_map(spec: BlurFieldSpec, shape: tuple[int, int]) -> np.ndarray:
    """Per-pixel effective kernel length (H, W), cross-faded like the blur."""
    H, W = shape
    weights = _blend_weights(spec, H, W)
    out = np.zeros((H, W))
    total = np.zeros((H, W))
    for reg, w in zip(spec.regions, weights):
        out += w * reg.length
        total += w
    out += (1.0 - total) * spec.bg_length
    return out


def generate_pattern(kind: str, size: int, seed: int) -> np.ndarray:
    """Deterministic textured (3, size, size) image in [0,1]."""
    rng = np.random.default_rng(seed)
    H = W = size
    if kind == "checker":
        cell = 8
        rr = np.arange(H)[:, None] // cell
        cc = np.arange(W)[None, :] // cell
        img = np.where((rr + cc) % 2 == 0, 0.9, 0.1)
        return np.repeat(img[None], 3, axis=0)
    if kind == "text":
        # short high-contrast strokes on a light background
        img = np.full((H, W), 0.85)
        for _ in range(size // 2):
            r = rng.integers(2, H - 2)
            c = rng.integers(2, W - 8)
            ln = rng.integers(3, 8)
            horiz = rng.random() < 0.7
            if horiz:
                img[r, c:c + ln] = 0.1
            else:
                img[max(0, r - ln):r, c] = 0.1
        return np.repeat(img[None], 3, axis=0)
    if kind == "gradient":
        # linear gradient plus random step edges, mean kept near 0.5
        gy, gx = rng.uniform(-1, 1, 2)
        rr = np.linspace(-0.5, 0.5, H)[:, None]
        cc = np.linspace(-0.5, 0.5, W)[None, :]
        img = 0.5 + 0.3 * (gy * rr + gx * cc)
        for _ in range(6):
            c = rng.integers(W // 8, W - W // 8)
            amp = rng.uniform(-0.2, 0.2)
            if rng.random() < 0.5:
                img = img + np.where(np.arange(W)[None, :] >= c, amp, -amp) * 0.5
            else:
                img = img + np.where(np.arange(H)[:, None] >= c * H // W, amp, -amp) * 0.5
        img = np.clip(img, 0.0, 1.0)
        return np.repeat(img[None], 3, axis=0)
    raise DataError(f"unknown pattern kind {kind!r}")


PATTERN_KINDS = ("checker", "text", "gradient")


def random_spec(H: int, W: int, rng: np.random.Generator,
                heterogeneous: bool = False,
                length_range: tuple[float, float] = (3.0, 9.0),
                bg_length_range: tuple[float, float] = (1.0, 3.0),
                ) -> BlurFieldSpec:
    """Random non-overlapping region layout.

    heterogeneous=True gives one heavily blurred region on a nearly sharp
    background (the regime where adaptive pixel selection should help);
    otherwise 1-3 regions whose kernel lengths are drawn from length_range
    on a background drawn from bg_length_range.
    """
    regions = []
    if heterogeneous:
        h = int(rng.integers(H // 3, H // 2))
        w = int(rng.integers(W // 3, W // 2))
        r0 = int(rng.integers(0, H - h))
        c0 = int(rng.integers(0, W - w))
        regions.append(BlurRegion((r0, c0, r0 + h, c0 + w),
                                  float(rng.uniform(0, math.pi)),
                                  float(rng.uniform(9, 13))))
        return BlurFieldSpec(regions, bg_angle=0.0, bg_length=1.0)
    n = int(rng.integers(1, 4))
    tries = 0
    while len(regions) < n and tries < 50:
        tries += 1
        h = int(rng.integers(H // 4, H // 2))
        w = int(rng.integers(W // 4, W // 2))
        r0 = int(rng.integers(0, H - h))
        c0 = int(rng.integers(0, W - w))
        cand = (r0, c0, r0 + h, c0 + w)
        ok = all(not (cand[0] < b[2] and b[0] < cand[2] and
                      cand[1] < b[3] and b[1] < cand[3])
                 for b in (reg.box for reg in regions))
        if ok:
            regions.append(BlurRegion(cand, float(rng.uniform(0, math.pi)),
                                      float(rng.uniform(*length_range))))
    return BlurFieldSpec(regions, bg_angle=float(rng.uniform(0, math.pi)),
                         bg_length=float(rng.uniform(*bg_length_range)))


def format_spec(spec: BlurFieldSpec) -> str:
    lines = [f"seed={spec.seed}",
             f"bg={spec.bg_angle:.8g},{spec.bg_length:.8g}",
             f"regions={len(spec.regions)}"]
    for i, reg in enumerate(spec.regions):
        r0, c0, r1, c1 = reg.box
        lines.append(f"region{i}={r0},{c0},{r1},{c1},{reg.angle:.8g},{reg.length:.8g}")
    return "\n".join(lines) + "\n"


def parse_spec(text: str) -> BlurFieldSpec:
    kv = {}
    for line in text.strip().splitlines():
        if not line.strip():
            continue
        if "=" not in line:
            raise DataError(f"bad spec line {line!r}")
        k, v = line.split("=", 1)
        kv[k.strip()] = v.strip()
    try:
        bg_angle, bg_length = (float(t) for t in kv["bg"].split(","))
        regions = []
        for i in range(int(kv["regions"])):
            parts = kv[f"region{i}"].split(",")
            box = tuple(int(t) for t in parts[:4])
            regions.append(BlurRegion(box, float(parts[4]), float(parts[5])))
        return BlurFieldSpec(regions, bg_angle=bg_angle, bg_length=bg_length,
                             seed=int(kv.get("seed", 0)))
    except (KeyError, ValueError) as exc:
        raise DataError(f"malformed blur spec: {exc}") from exc

def generate_dataset(out_dir, count: int, seed: int, size: int = 64,
                     heterogeneous: bool = False,
                     length_range: tuple[float, float] = (3.0, 9.0),
                     bg_length_range: tuple[float, float] = (1.0, 3.0),
                     ) -> None:
    """Write `samples/NNNN_{sharp,blur}.png`, `NNNN_spec.txt`, `NNNN_len.tnsr`."""
    from pathlib import Path

    from .tensorio import save_image, save_tensor

    root = Path(out_dir) / "samples"
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(count):
        kind = PATTERN_KINDS[i % len(PATTERN_KINDS)]
        pat_seed = int(rng.integers(0, 2 ** 31))
        sharp = generate_pattern(kind, size, pat_seed)
        spec = random_spec(size, size, rng, heterogeneous=heterogeneous,
                           length_range=length_range,
                           bg_length_range=bg_length_range)
        spec.seed = pat_seed
        sample = synthesize(sharp, spec)
        stem = root / f"{i:04d}"
        save_image(f"{stem}_sharp.png", sample.sharp)
        save_image(f"{stem}_blur.png", sample.blurred)
        with open(f"{stem}_spec.txt", "w") as fh:
            fh.write(format_spec(spec))
        save_tensor(f"{stem}_len.tnsr",
                    degradation_map(spec, (size, size)).astype(np.float32))


def load_dataset(data_dir) -> list[dict]:
    """Read a generated dataset back as a list of sample dicts."""
    from pathlib import Path

    from .tensorio import load_image, load_tensor

    root = Path(data_dir) / "samples"
    if not root.is_dir():
        raise DataError(f"no samples/ directory under {data_dir}")
    out = []
    for spec_path in sorted(root.glob("*_spec.txt")):
        stem = str(spec_path)[:-len("_spec.txt")]
        try:
            sample = {
                "sharp": load_image(f"{stem}_sharp.png"),
                "blur": load_image(f"{stem}_blur.png"),
                "spec": parse_spec(spec_path.read_text()),
            }
        except FileNotFoundError as exc:
            raise DataError(f"incomplete sample {stem}: {exc}") from exc
        len_path = Path(f"{stem}_len.tnsr")
        if len_path.exists():
            sample["length_map"] = load_tensor(len_path)
        out.append(sample)
    if not out:
        raise DataError(f"no samples found under {root}")
    return out
