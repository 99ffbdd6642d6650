"""Feature extractors and learned upsamplers shared by the model zoo."""
from __future__ import annotations

from functools import lru_cache

import torch
import torch.nn.functional as F
from torch import nn

RESIDUAL_BETA = 0.2


class DenseBlock(nn.Module):
    """Five densely connected 3x3 convolutions with a scaled residual."""

    def __init__(self, channels: int, growth: int = 32):
        super().__init__()
        self.convs = nn.ModuleList(
            nn.Conv2d(channels + i * growth, growth, 3, padding=1) for i in range(4)
        )
        self.last = nn.Conv2d(channels + 4 * growth, channels, 3, padding=1)

    def forward(self, x):
        feats = [x]
        for conv in self.convs:
            feats.append(F.leaky_relu(conv(torch.cat(feats, 1)), 0.2))
        return x + RESIDUAL_BETA * self.last(torch.cat(feats, 1))


class RRDB(nn.Module):
    def __init__(self, channels: int, growth: int = 32):
        super().__init__()
        self.blocks = nn.Sequential(*(DenseBlock(channels, growth) for _ in range(3)))

    def forward(self, x):
        return x + RESIDUAL_BETA * self.blocks(x)


class RRDBExtractor(nn.Module):
    """Conv stem, ``n_blocks`` RRDBs, trunk conv, global residual to the stem."""

    def __init__(self, in_channels: int, width: int = 64, n_blocks: int = 6, growth: int = 32):
        super().__init__()
        self.stem = nn.Conv2d(in_channels, width, 3, padding=1)
        self.body = nn.Sequential(*(RRDB(width, growth) for _ in range(n_blocks)))
        self.trunk = nn.Conv2d(width, width, 3, padding=1)
        self.out_channels = width

    def forward(self, x):
        fea = self.stem(x)
        return fea + self.trunk(self.body(fea))

    def zero_residuals_(self):
        """Zero every residual branch so the extractor returns its stem output."""
        with torch.no_grad():
            for m in self.modules():
                if isinstance(m, DenseBlock):
                    m.last.weight.zero_()
                    m.last.bias.zero_()
            self.trunk.weight.zero_()
            self.trunk.bias.zero_()
        return self


def rrdb_extractor_param_count(in_channels: int, width: int, n_blocks: int, growth: int = 32) -> int:
    """Closed-form learnable-scalar count of :class:`RRDBExtractor`."""
    conv = lambda cin, cout, k: cin * cout * k * k + cout  # noqa: E731
    dense = sum(conv(width + i * growth, growth, 3) for i in range(4)) + conv(width + 4 * growth, width, 3)
    return conv(in_channels, width, 3) + n_blocks * 3 * dense + conv(width, width, 3)


class PassThrough(nn.Module):
    """Extractor stand-in that hands the LR input straight to the interpolation step."""

    def __init__(self, in_channels: int):
        super().__init__()
        self.out_channels = in_channels

    def forward(self, x):
        return x


# --- Swin transformer blocks ------------------------------------------------

def window_partition(x, ws: int):
    b, h, w, c = x.shape
    x = x.view(b, h // ws, ws, w // ws, ws, c)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(-1, ws * ws, c)


def window_reverse(windows, ws: int, h: int, w: int):
    b = windows.shape[0] // ((h // ws) * (w // ws))
    x = windows.view(b, h // ws, w // ws, ws, ws, -1)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(b, h, w, -1)


@lru_cache(maxsize=32)
def _relative_index(ws: int) -> torch.Tensor:
    coords = torch.stack(torch.meshgrid(torch.arange(ws), torch.arange(ws), indexing="ij")).flatten(1)
    rel = (coords[:, :, None] - coords[:, None, :]).permute(1, 2, 0) + (ws - 1)
    return rel[..., 0] * (2 * ws - 1) + rel[..., 1]


@lru_cache(maxsize=32)
def _shift_mask(h: int, w: int, ws: int, shift: int) -> torch.Tensor:
    img = torch.zeros(1, h, w, 1)
    cnt = 0
    for hs in (slice(0, -ws), slice(-ws, -shift), slice(-shift, None)):
        for wsl in (slice(0, -ws), slice(-ws, -shift), slice(-shift, None)):
            img[:, hs, wsl, :] = cnt
            cnt += 1
    win = window_partition(img, ws).squeeze(-1)
    mask = win[:, None, :] - win[:, :, None]
    return mask.masked_fill(mask != 0, -100.0).masked_fill(mask == 0, 0.0)


class WindowAttention(nn.Module):
    def __init__(self, dim: int, window: int, heads: int):
        super().__init__()
        self.window, self.heads = window, heads
        self.scale = (dim // heads) ** -0.5
        self.bias_table = nn.Parameter(torch.zeros((2 * window - 1) ** 2, heads))
        nn.init.trunc_normal_(self.bias_table, std=0.02)
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x, mask=None):
        bw, n, c = x.shape
        qkv = self.qkv(x).reshape(bw, n, 3, self.heads, c // self.heads).permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        attn = (q * self.scale) @ k.transpose(-2, -1)
        idx = _relative_index(self.window).to(x.device)
        bias = self.bias_table[idx.reshape(-1)].reshape(n, n, -1).permute(2, 0, 1)
        attn = attn + bias.unsqueeze(0)
        if mask is not None:
            nw = mask.shape[0]
            attn = attn.view(bw // nw, nw, self.heads, n, n) + mask.to(attn.dtype)[None, :, None]
            attn = attn.view(-1, self.heads, n, n)
        attn = attn.softmax(-1)
        return self.proj((attn @ v).transpose(1, 2).reshape(bw, n, c))


class SwinLayer(nn.Module):
    def __init__(self, dim: int, heads: int, window: int = 8, shift: int = 0, mlp_ratio: float = 2.0):
        super().__init__()
        self.window, self.shift = window, shift
        self.norm1 = nn.LayerNorm(dim)
        self.attn = WindowAttention(dim, window, heads)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def forward(self, x):
        # x: (B, H, W, C) with H, W multiples of the window
        b, h, w, c = x.shape
        ws = self.window
        shift = self.shift if min(h, w) > ws else 0
        y = self.norm1(x)
        if shift:
            y = torch.roll(y, (-shift, -shift), (1, 2))
        mask = _shift_mask(h, w, ws, shift) if shift else None
        y = window_reverse(self.attn(window_partition(y, ws), mask), ws, h, w)
        if shift:
            y = torch.roll(y, (shift, shift), (1, 2))
        x = x + y
        return x + self.mlp(self.norm2(x))


class RSTB(nn.Module):
    """Residual Swin transformer block: alternating shifted-window layers, conv, residual."""

    def __init__(self, dim: int, depth: int = 4, heads: int = 4, window: int = 8, mlp_ratio: float = 2.0):
        super().__init__()
        self.layers = nn.ModuleList(
            SwinLayer(dim, heads, window, 0 if i % 2 == 0 else window // 2, mlp_ratio) for i in range(depth)
        )
        self.conv = nn.Conv2d(dim, dim, 3, padding=1)

    def forward(self, x):
        y = x.permute(0, 2, 3, 1)
        for layer in self.layers:
            y = layer(y)
        return x + self.conv(y.permute(0, 3, 1, 2))


def pad_to_window(x, window: int):
    """Reflect-pad H and W up to multiples of ``window``; returns the padded tensor."""
    h, w = x.shape[-2:]
    ph, pw = (-h) % window, (-w) % window
    if ph or pw:
        mode = "reflect" if ph < h and pw < w else "replicate"
        x = F.pad(x, (0, pw, 0, ph), mode=mode)
    return x


class RSTBExtractor(nn.Module):
    """Shallow conv, RSTB stack, conv, residual; spatial size preserved."""

    def __init__(self, in_channels: int, width: int = 64, n_blocks: int = 4, depth: int = 4,
                 heads: int = 4, window: int = 8, mlp_ratio: float = 2.0):
        super().__init__()
        self.window = window
        self.shallow = nn.Conv2d(in_channels, width, 3, padding=1)
        self.body = nn.Sequential(*(RSTB(width, depth, heads, window, mlp_ratio) for _ in range(n_blocks)))
        self.norm = nn.LayerNorm(width)
        self.conv = nn.Conv2d(width, width, 3, padding=1)
        self.out_channels = width

    def forward(self, x):
        h, w = x.shape[-2:]
        x = pad_to_window(x, self.window)
        fea = self.shallow(x)
        y = self.norm(self.body(fea).permute(0, 2, 3, 1)).permute(0, 3, 1, 2)
        return (fea + self.conv(y))[..., :h, :w]


# --- sub-pixel upsampling ---------------------------------------------------

def shuffle_factors(s: int) -> list[int]:
    """Split ``s`` into pixel-shuffle stages of 2, 3 and 5."""
    if s < 1:
        raise ValueError(f"upsampling factor must be positive, got {s}")
    out, rest = [], s
    for p in (2, 3, 5):
        while rest % p == 0:
            out.append(p)
            rest //= p
    if rest != 1:
        raise ValueError(f"factor {s} is not a product of 2, 3 and 5 pixel-shuffle stages")
    return out


class SubPixelUpsampler(nn.Sequential):
    def __init__(self, channels: int, factor: int):
        layers = []
        for r in shuffle_factors(factor):
            layers += [nn.Conv2d(channels, channels * r * r, 3, padding=1), nn.PixelShuffle(r)]
        super().__init__(*layers)
        self.factor = factor
