"""Pre-activation residual encoder with a classification head or a J-Net decoder.

The encoder maps one 3x300 window to a representation vector and a list of
per-stage feature maps (the skip taps). The J-Net decoder takes the skip taps
of K consecutive windows (K=1, or K=3 for the triple-window strategy),
concatenates them along time, and mirrors the encoder: repeat-upsample,
concatenate the matching skip, convolve. Only the middle window's logits are
returned when K=3.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .. import WINDOW_SAMPLES
from ..errors import ConfigError

HEADS = ("classification", "jnet", "jnet_multitask")
REP_DIM = 1024


@dataclass
class ModelConfig:
    stage_channels: list = field(default_factory=lambda: [32, 64, 128, 256, 1024])
    stage_downsample: list = field(default_factory=lambda: [2, 2, 3, 5, 5])
    kernel_size: int = 5
    head: str = "jnet"
    n_chorea_classes: int = 5
    blocks_per_stage: int = 1
    # the 1024-d representation is the foundation encoder's contract; small
    # configurations for checks and desk-scale studies opt out explicitly
    require_rep_dim: bool = True

    def validate(self):
        if self.head not in HEADS:
            raise ConfigError(f"head must be one of {HEADS}, got {self.head!r}")
        if len(self.stage_channels) != len(self.stage_downsample):
            raise ConfigError("stage_channels and stage_downsample differ in length")
        if int(np.prod(self.stage_downsample)) != WINDOW_SAMPLES:
            raise ConfigError(f"product of stage_downsample must be {WINDOW_SAMPLES}, got {self.stage_downsample}")
        if self.require_rep_dim and self.stage_channels[-1] != REP_DIM:
            raise ConfigError(f"final stage must have {REP_DIM} channels, got {self.stage_channels[-1]}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError("kernel_size must be a positive odd integer")
        if self.blocks_per_stage < 1:
            raise ConfigError("blocks_per_stage must be >= 1")
        return self

    def skip_lengths(self):
        return [WINDOW_SAMPLES // int(np.prod(self.stage_downsample[: i + 1])) for i in range(len(self.stage_downsample))]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


def conv1d(cin, cout, k, stride=1):
    # replicate padding keeps constant inputs constant through the stack
    return nn.Conv1d(cin, cout, k, stride=stride, padding=k // 2, padding_mode="replicate")


class PreActBlock(nn.Module):
    """BN-ReLU-conv(stride) -> BN-ReLU-conv, with a projection shortcut when shapes change."""

    def __init__(self, cin, cout, k, stride=1):
        super().__init__()
        self.bn1 = nn.BatchNorm1d(cin)
        self.conv1 = conv1d(cin, cout, k, stride)
        self.bn2 = nn.BatchNorm1d(cout)
        self.conv2 = conv1d(cout, cout, k)
        self.shortcut = None
        if stride != 1 or cin != cout:
            self.shortcut = nn.Conv1d(cin, cout, 1, stride=stride)

    def forward(self, x):
        out = F.relu(self.bn1(x))
        sc = self.shortcut(out) if self.shortcut is not None else x
        out = self.conv1(out)
        out = self.conv2(F.relu(self.bn2(out)))
        return out + sc


class Encoder(nn.Module):
    def __init__(self, cfg):
        super().__init__()
        k = cfg.kernel_size
        ch = list(cfg.stage_channels)
        self.stem = conv1d(3, ch[0], k)
        stages = []
        cin = ch[0]
        for cout, d in zip(ch, cfg.stage_downsample):
            blocks = [PreActBlock(cin, cout, k, stride=d)]
            blocks += [PreActBlock(cout, cout, k) for _ in range(cfg.blocks_per_stage - 1)]
            stages.append(nn.Sequential(*blocks))
            cin = cout
        self.stages = nn.ModuleList(stages)
        self.bn_out = nn.BatchNorm1d(ch[-1])

    def forward(self, x):
        if x.dim() != 3 or x.shape[1] != 3 or x.shape[2] != WINDOW_SAMPLES:
            raise ConfigError(f"encoder expects (batch, 3, {WINDOW_SAMPLES}), got {tuple(x.shape)}")
        h = self.stem(x)
        skips = []
        for stage in self.stages:
            h = stage(h)
            skips.append(h)
        rep = F.relu(self.bn_out(h)).mean(dim=2)
        return rep, skips


class DecoderBlock(nn.Module):
    """Nearest-neighbour repeat upsampling followed by BN-ReLU-conv."""

    def __init__(self, cin, cout, k, scale):
        super().__init__()
        self.scale = int(scale)
        self.bn = nn.BatchNorm1d(cin)
        self.conv = conv1d(cin, cout, k)

    def forward(self, x, skip=None):
        if self.scale > 1:
            x = torch.repeat_interleave(x, self.scale, dim=2)
        if skip is not None:
            x = torch.cat([x, skip], dim=1)
        return self.conv(F.relu(self.bn(x)))


class JNetDecoder(nn.Module):
    def __init__(self, cfg, n_classes=2):
        super().__init__()
        k = cfg.kernel_size
        ch = list(cfg.stage_channels)
        ds = list(cfg.stage_downsample)
        S = len(ch)
        out_ch = [ch[max(i - 1, 0)] for i in range(S)]
        # bottom: representation sequence concatenated with the deepest skip
        self.bottom = DecoderBlock(2 * ch[-1], out_ch[-1], k, scale=1)
        ups = []
        cin = out_ch[-1]
        for i in range(S - 2, -1, -1):
            ups.append(DecoderBlock(cin + ch[i], out_ch[i], k, scale=ds[i + 1]))
            cin = out_ch[i]
        self.ups = nn.ModuleList(ups)
        self.final = DecoderBlock(cin, out_ch[0], k, scale=ds[0])
        self.gait_out = nn.Conv1d(out_ch[0], n_classes, 1)
        self.out_channels = out_ch[0]

    def forward(self, rep_seq, skip_seqs):
        x = self.bottom(torch.cat([rep_seq, skip_seqs[-1]], dim=1))
        for block, skip in zip(self.ups, reversed(skip_seqs[:-1])):
            x = block(x, skip)
        return F.relu(self.final(x))


class GaitNet(nn.Module):
    """Encoder plus one of: classification head, J-Net head, multi-task J-Net head."""

    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg.validate()
        self.encoder = Encoder(cfg)
        c_rep = cfg.stage_channels[-1]
        self.cls_head = None
        self.decoder = None
        self.chorea_out = None
        if cfg.head == "classification":
            self.cls_head = nn.Linear(c_rep, 1)
        else:
            self.decoder = JNetDecoder(cfg)
            if cfg.head == "jnet_multitask":
                self.chorea_out = nn.Conv1d(self.decoder.out_channels, cfg.n_chorea_classes, 1)

    @property
    def is_segmentation(self):
        return self.decoder is not None

    def encode(self, x):
        return self.encoder(x)

    def classify_logit(self, x):
        """(B, 3, 300) -> (B,) logits of P(gait)."""
        rep, _ = self.encoder(x)
        return self.cls_head(rep).squeeze(-1)

    def segment(self, x):
        """(B, K, 3, 300) with K in {1, 3} -> dict of (B, C, 300) logits for the scored window."""
        if x.dim() != 4 or x.shape[2] != 3 or x.shape[3] != WINDOW_SAMPLES or x.shape[1] not in (1, 3):
            raise ConfigError(f"J-Net expects (batch, 1|3, 3, {WINDOW_SAMPLES}), got {tuple(x.shape)}")
        B, K = x.shape[:2]
        rep, skips = self.encoder(x.reshape(B * K, 3, WINDOW_SAMPLES))

        def along_time(t):
            # (B*K, C, L) -> (B, C, K*L), windows laid end to end
            C, L = t.shape[1], t.shape[2]
            return t.reshape(B, K, C, L).permute(0, 2, 1, 3).reshape(B, C, K * L)

        rep_seq = rep.reshape(B, K, -1).permute(0, 2, 1)
        feats = self.decoder(rep_seq, [along_time(s) for s in skips])
        lo = (K // 2) * WINDOW_SAMPLES
        feats = feats[:, :, lo:lo + WINDOW_SAMPLES]
        out = {"gait": self.decoder.gait_out(feats)}
        if self.chorea_out is not None:
            out["chorea"] = self.chorea_out(feats)
        return out

    def forward(self, x):
        return self.segment(x) if self.is_segmentation else self.classify_logit(x)

    def n_params(self):
        return sum(p.numel() for p in self.parameters())


def build_model(cfg, seed=0, dtype=torch.float64):
    """Seeded init: fan-in uniform for conv/linear weights, zero shifts, unit scales."""
    gen = torch.Generator().manual_seed(int(seed))
    model = GaitNet(cfg)
    with torch.no_grad():
        for mod in model.modules():
            if isinstance(mod, (nn.Conv1d, nn.Linear)):
                fan_in = mod.weight[0].numel()
                bound = math.sqrt(6.0 / fan_in)
                mod.weight.copy_(torch.empty_like(mod.weight).uniform_(-bound, bound, generator=gen))
                if mod.bias is not None:
                    mod.bias.zero_()
            elif isinstance(mod, nn.BatchNorm1d):
                mod.weight.fill_(1.0)
                mod.bias.zero_()
                mod.reset_running_stats()
    return model.to(dtype)


def encoder_forward(model, w):
    """Inference-mode encoder pass on one (3, 300) window or a batch."""
    x = torch.as_tensor(np.asarray(w), dtype=next(model.parameters()).dtype)
    single = x.dim() == 2
    if single:
        x = x[None]
    was = model.training
    model.eval()
    with torch.no_grad():
        rep, skips = model.encoder(x)
    model.train(was)
    if single:
        return rep[0], [s[0] for s in skips]
    return rep, skips


def classification_head(rep, weight, bias):
    """Probability of gait from a representation vector: sigmoid(w . rep + b)."""
    rep = torch.as_tensor(rep)
    weight = torch.as_tensor(weight, dtype=rep.dtype).reshape(-1)
    if rep.shape[-1] != weight.shape[0]:
        raise ConfigError(f"representation length {rep.shape[-1]} != head width {weight.shape[0]}")
    return torch.sigmoid(rep @ weight + torch.as_tensor(bias, dtype=rep.dtype).reshape(()))


def jnet_forward(model, triple):
    """Logits for the middle window of a TripleWindow (or a raw (K, 3, 300) array)."""
    data = triple
    if hasattr(triple, "mid"):
        data = np.stack([triple.prev.data, triple.mid.data, triple.next.data])
    x = torch.as_tensor(np.asarray(data), dtype=next(model.parameters()).dtype)
    if x.dim() == 3:
        x = x[None]
    was = model.training
    model.eval()
    with torch.no_grad():
        out = model.segment(x)
    model.train(was)
    return {k: v[0] for k, v in out.items()}
