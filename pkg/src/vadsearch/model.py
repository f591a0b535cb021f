"""Macro-architecture assembly: stem, cell stack with width reduction, head."""

from __future__ import annotations

import math

import torch
from torch import nn

from .arch import ADD_NODES, ArchSpec, deserialize_arch, serialize_arch, validate_arch
from .ops import build_op


class PortPreprocess(nn.Module):
    """Adapts a cell input port: stride-2 average pooling over the feature
    axis when the width must shrink, then a 1x1 conv when channels differ."""

    def __init__(self, in_channels: int, in_feat: int, out_channels: int, out_feat: int):
        super().__init__()
        if out_feat == in_feat:
            self.pool = None
        elif out_feat == math.ceil(in_feat / 2):
            self.pool = nn.AvgPool2d(kernel_size=(1, 2), stride=(1, 2), ceil_mode=True)
        else:
            raise ValueError(f"unsupported feature reduction {in_feat} -> {out_feat}")
        self.proj = (nn.Identity() if in_channels == out_channels
                     else nn.Conv2d(in_channels, out_channels, 1))

    def forward(self, x):
        if self.pool is not None:
            x = self.pool(x)
        return self.proj(x)


class Cell(nn.Module):
    """One cell instance: three addition nodes fed by six op edges; the
    addition-node outputs are concatenated along the channel axis."""

    def __init__(self, arch: ArchSpec, channels: int):
        super().__init__()
        self.edges = arch.cell.edges
        self.edge_ops = nn.ModuleList(
            [build_op(op, channels) for _, _, op in self.edges])

    def forward(self, port1, port2):
        values = {0: port1, 1: port2}
        for node in ADD_NODES:
            acc = None
            for idx, (src, dst, _) in enumerate(self.edges):
                if dst != node:
                    continue
                out = self.edge_ops[idx](values[src])
                acc = out if acc is None else acc + out
            values[node] = acc
        return torch.cat([values[n] for n in ADD_NODES], dim=1)


class VadModel(nn.Module):
    """Stem -> cell stack (single width reduction) -> per-frame linear head.

    Input: (B, 1, T, mel_bins). Output probabilities: (B, T, n_offsets).
    Time length is preserved end to end.
    """

    def __init__(self, arch: ArchSpec):
        super().__init__()
        report = validate_arch(arch)
        if not report.ok:
            raise ValueError(f"invalid architecture: {report.violations}")
        self.arch = arch
        c = arch.base_channels
        self.stem = nn.Sequential(
            nn.Conv2d(1, c, 3, padding=1), nn.BatchNorm2d(c), nn.GELU(),
            nn.Conv2d(c, c, 3, padding=1), nn.BatchNorm2d(c), nn.GELU(),
        )
        # Producer shapes seen by each cell's two ports: the previous and the
        # one-before-previous outputs (the stem feeds both ports of cell 1).
        producers = [(c, arch.input_mel_bins), (c, arch.input_mel_bins)]
        self.cells = nn.ModuleList()
        self.preprocess = nn.ModuleList()
        for i in range(1, arch.num_cells + 1):
            reduced = i >= arch.reduction_index
            cell_c = 2 * c if reduced else c
            cell_f = math.ceil(arch.input_mel_bins / 2) if reduced else arch.input_mel_bins
            prev_c, prev_f = producers[-1]
            prev2_c, prev2_f = producers[-2]
            self.preprocess.append(nn.ModuleList([
                PortPreprocess(prev_c, prev_f, cell_c, cell_f),
                PortPreprocess(prev2_c, prev2_f, cell_c, cell_f),
            ]))
            self.cells.append(Cell(arch, cell_c))
            producers.append((3 * cell_c, cell_f))
        last_c, last_f = producers[-1]
        self.head = nn.Linear(last_c * last_f, len(arch.target_offsets))

    def logits(self, x):
        s = self.stem(x)
        outs = [s, s]
        for pre, cell in zip(self.preprocess, self.cells):
            a = pre[0](outs[-1])
            b = pre[1](outs[-2])
            outs.append(cell(a, b))
        h = outs[-1]
        b, c, t, f = h.shape
        h = h.permute(0, 2, 1, 3).reshape(b, t, c * f)
        return self.head(h)

    def forward(self, x):
        return torch.sigmoid(self.logits(x))


def _init_parameters(model: nn.Module, seed: int) -> None:
    gen = torch.Generator().manual_seed(seed)
    for module in model.modules():
        if isinstance(module, (nn.Conv2d, nn.Linear)):
            fan_in = module.weight.shape[1:].numel() if isinstance(module, nn.Conv2d) \
                else module.weight.shape[1]
            bound = 1.0 / math.sqrt(max(fan_in, 1))
            with torch.no_grad():
                module.weight.uniform_(-bound, bound, generator=gen)
                if module.bias is not None:
                    module.bias.uniform_(-bound, bound, generator=gen)
        elif isinstance(module, (nn.BatchNorm2d, nn.LayerNorm)):
            with torch.no_grad():
                module.weight.fill_(1.0)
                module.bias.fill_(0.0)


def build_model(arch: ArchSpec, rng_seed: int = 0) -> VadModel:
    model = VadModel(arch)
    _init_parameters(model, rng_seed)
    return model


def count_params(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def save_checkpoint(path, model: VadModel, extra: dict | None = None) -> None:
    payload = {
        "arch": serialize_arch(model.arch),
        "state_dict": model.state_dict(),
        "shapes": {k: list(v.shape) for k, v in model.state_dict().items()},
        "extra": extra or {},
    }
    torch.save(payload, path)


def load_checkpoint(path) -> tuple[VadModel, dict]:
    payload = torch.load(path, weights_only=False)
    arch = deserialize_arch(payload["arch"])
    model = VadModel(arch)
    model.load_state_dict(payload["state_dict"])
    return model, payload.get("extra", {})
