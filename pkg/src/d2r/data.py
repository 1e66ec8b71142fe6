"""Synthetic degradation generators, toy dataset construction, image I/O,
and fidelity metrics (PSNR/SSIM)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .errors import ContractViolation
from .numerics import check_feature_map

PSNR_CAP = 100.0

NOISE_SIGMAS = (15 / 255, 25 / 255, 50 / 255)


@dataclass
class DegradationSpec:
    kind: str                 # noise | blur | lowlight | haze
    level: float              # sigma, sigma_b, gamma, or transmission t
    gain: float = 0.8         # lowlight alpha
    airlight: float = 0.85    # haze A
    seed: int = 0

    def validate(self):
        if self.kind == "noise":
            if not any(abs(self.level - s) < 1e-9 for s in NOISE_SIGMAS):
                raise ContractViolation(
                    f"noise sigma must be one of {{15,25,50}}/255, got {self.level}")
        elif self.kind == "blur":
            if not 1.0 <= self.level <= 3.0:
                raise ContractViolation(f"blur sigma must be in [1,3], got {self.level}")
        elif self.kind == "lowlight":
            if not 2.0 <= self.level <= 3.0:
                raise ContractViolation(f"lowlight gamma must be in [2,3], got {self.level}")
            if not 0.7 <= self.gain <= 0.9:
                raise ContractViolation(f"lowlight gain must be in [0.7,0.9], got {self.gain}")
        elif self.kind == "haze":
            if not 0.3 <= self.level <= 1.0:
                raise ContractViolation(
                    f"haze transmission must be in [0.3,1.0], got {self.level}")
            if not 0.7 <= self.airlight <= 1.0:
                raise ContractViolation(f"airlight must be in [0.7,1.0], got {self.airlight}")
        else:
            raise ContractViolation(f"unknown degradation kind {self.kind!r}")


@dataclass
class SamplePair:
    clean: torch.Tensor
    degraded: torch.Tensor
    spec: DegradationSpec


def gaussian_kernel1d(sigma: float, dtype=torch.float32) -> torch.Tensor:
    radius = math.ceil(2 * sigma)
    xs = torch.arange(-radius, radius + 1, dtype=dtype)
    k = torch.exp(-0.5 * (xs / sigma) ** 2)
    return k / k.sum()


def degrade(clean: torch.Tensor, spec: DegradationSpec,
            generator: torch.Generator | None = None) -> torch.Tensor:
    check_feature_map(clean)
    spec.validate()
    if generator is None:
        generator = torch.Generator().manual_seed(spec.seed)
    if spec.kind == "noise":
        noise = torch.randn(clean.shape, generator=generator, dtype=clean.dtype)
        return (clean + spec.level * noise).clamp(0.0, 1.0)
    if spec.kind == "blur":
        k1 = gaussian_kernel1d(spec.level, clean.dtype)
        c = clean.shape[1]
        pad = (len(k1) - 1) // 2
        x = F.pad(clean, (pad, pad, pad, pad), mode="reflect")
        kh = k1.view(1, 1, 1, -1).expand(c, 1, 1, -1)
        kv = k1.view(1, 1, -1, 1).expand(c, 1, -1, 1)
        x = F.conv2d(x, kh, groups=c)
        x = F.conv2d(x, kv, groups=c)
        return x.clamp(0.0, 1.0)
    if spec.kind == "lowlight":
        return (spec.gain * clean ** spec.level).clamp(0.0, 1.0)
    # haze
    return (clean * spec.level + spec.airlight * (1.0 - spec.level)).clamp(0.0, 1.0)


def band_limited_field(n: int, size: tuple[int, int],
                       generator: torch.Generator, max_freq: int = 6,
                       dtype=torch.float32) -> torch.Tensor:
    """Smooth random images from low-order Fourier coefficients, min-max
    normalized to [0,1] per image."""
    h, w = size
    coeff = torch.zeros(n, 3, h, w, dtype=torch.complex64)
    k = max_freq
    re = torch.randn(n, 3, 2 * k + 1, 2 * k + 1, generator=generator)
    im = torch.randn(n, 3, 2 * k + 1, 2 * k + 1, generator=generator)
    block = torch.complex(re, im)
    # decay amplitude with radial frequency
    fy = torch.arange(-k, k + 1).view(-1, 1).abs()
    fx = torch.arange(-k, k + 1).view(1, -1).abs()
    block = block / (1.0 + fy ** 2 + fx ** 2)
    ys = [(i % h) for i in range(-k, k + 1)]
    xs = [(i % w) for i in range(-k, k + 1)]
    for a, y in enumerate(ys):
        for b, x in enumerate(xs):
            coeff[:, :, y, x] += block[:, :, a, b]
    img = torch.fft.ifft2(coeff).real
    flat = img.reshape(n, 3, -1)
    lo = flat.min(dim=2, keepdim=True).values
    hi = flat.max(dim=2, keepdim=True).values
    flat = (flat - lo) / (hi - lo + 1e-12)
    return flat.reshape(n, 3, h, w).to(dtype)


def make_dataset(n: int, size: tuple[int, int], specs: list[DegradationSpec],
                 seed: int = 0, image_dir: str | Path | None = None
                 ) -> tuple[list[SamplePair], list[SamplePair]]:
    """Synthesize n paired samples and split them 90/10 train/held-out."""
    if n < 1:
        raise ContractViolation(f"n must be >= 1, got {n}")
    g = torch.Generator().manual_seed(seed)
    cleans = band_limited_field(n, size, g)
    if image_dir is not None:
        extra = load_image_dir(image_dir, size)
        if extra is not None and extra.shape[0] > 0:
            cleans = torch.cat([cleans, extra], dim=0)[:n]
    pairs = []
    for i in range(n):
        spec = specs[i % len(specs)]
        gi = torch.Generator().manual_seed(seed * 1_000_003 + i)
        clean = cleans[i:i + 1]
        pairs.append(SamplePair(clean, degrade(clean, spec, gi), spec))
    n_held = max(1, n // 10)
    return pairs[:-n_held], pairs[-n_held:]


def load_image_dir(path: str | Path, size: tuple[int, int]) -> torch.Tensor | None:
    path = Path(path)
    if not path.is_dir():
        raise ContractViolation(f"image directory {path} is not readable")
    files = sorted(p for p in path.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
    if not files:
        return None
    out = []
    for p in files:
        img = read_png(p)
        img = F.interpolate(img, size=size, mode="bilinear", align_corners=False)
        out.append(img.clamp(0, 1))
    return torch.cat(out, dim=0)


def read_png(path: str | Path) -> torch.Tensor:
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32) / 255.0
    return torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0)


def write_png(path: str | Path, img: torch.Tensor):
    check_feature_map(img)
    arr = (img[0].clamp(0, 1) * 255.0).round().to(torch.uint8)
    Image.fromarray(arr.permute(1, 2, 0).numpy()).save(path)


def psnr(x: torch.Tensor, y: torch.Tensor, peak: float = 1.0) -> float:
    if x.shape != y.shape:
        raise ContractViolation(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
    mse = float(((x - y) ** 2).mean())
    if mse < 1e-10:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(peak ** 2 / mse))


def _ssim_window(dtype) -> torch.Tensor:
    xs = torch.arange(11, dtype=dtype) - 5.0
    g = torch.exp(-0.5 * (xs / 1.5) ** 2)
    g = g / g.sum()
    return torch.outer(g, g)


def ssim(x: torch.Tensor, y: torch.Tensor, peak: float = 1.0) -> float:
    """Windowed structural similarity: 11x11 Gaussian window (sigma 1.5),
    C1=(0.01*peak)^2, C2=(0.03*peak)^2, mean over windows and channels."""
    if x.shape != y.shape:
        raise ContractViolation(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
    c = x.shape[1]
    win = _ssim_window(x.dtype).view(1, 1, 11, 11).expand(c, 1, 11, 11)
    mu_x = F.conv2d(x, win, groups=c)
    mu_y = F.conv2d(y, win, groups=c)
    xx = F.conv2d(x * x, win, groups=c) - mu_x ** 2
    yy = F.conv2d(y * y, win, groups=c) - mu_y ** 2
    xy = F.conv2d(x * y, win, groups=c) - mu_x * mu_y
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    s = ((2 * mu_x * mu_y + c1) * (2 * xy + c2)) / ((mu_x ** 2 + mu_y ** 2 + c1) * (xx + yy + c2))
    return float(s.mean())


def write_manifest(path: str | Path, rows: list[tuple[str, str, str, str]]):
    """Tab-separated manifest: path_clean, path_degraded, kind, params."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write("\t".join(row) + "\n")


def params_text(spec: DegradationSpec) -> str:
    return (f"level={spec.level!r};gain={spec.gain!r};"
            f"airlight={spec.airlight!r};seed={spec.seed}")


def spec_from_params(kind: str, text: str) -> DegradationSpec:
    vals = {}
    for item in text.split(";"):
        if not item:
            continue
        key, _, value = item.partition("=")
        vals[key.strip()] = value.strip()
    try:
        return DegradationSpec(kind=kind,
                               level=float(vals["level"]),
                               gain=float(vals.get("gain", 0.8)),
                               airlight=float(vals.get("airlight", 0.85)),
                               seed=int(vals.get("seed", 0)))
    except (KeyError, ValueError) as exc:
        raise ContractViolation(f"bad degradation params {text!r}") from exc


def load_pairs(data_dir: str | Path) -> list[SamplePair]:
    """Read manifest.tsv inside data_dir and load every referenced pair.
    Relative paths resolve against the manifest's directory."""
    data_dir = Path(data_dir)
    manifest = data_dir / "manifest.tsv"
    if not manifest.is_file():
        raise ContractViolation(f"no manifest.tsv in {data_dir}")
    pairs = []
    for lineno, line in enumerate(manifest.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 4:
            raise ContractViolation(f"{manifest}:{lineno}: expected 4 columns, got {len(cols)}")
        p_clean, p_deg, kind, params = cols
        spec = spec_from_params(kind, params)
        clean = read_png(p_clean if Path(p_clean).is_absolute() else data_dir / p_clean)
        deg = read_png(p_deg if Path(p_deg).is_absolute() else data_dir / p_deg)
        pairs.append(SamplePair(clean, deg, spec))
    if not pairs:
        raise ContractViolation(f"{manifest} lists no samples")
    return pairs
