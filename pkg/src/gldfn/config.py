"""Training configuration and the flat key-value config file format.

Config files are plain text, one ``dotted.key = value`` per line, with
``#`` comments.  Keys under ``net.`` map onto NetworkConfig fields, the
rest onto TrainConfig.  CLI flags override file values.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from .network import NetworkConfig

SETTINGS = ("iso", "aniso", "varying")

# widths sampled uniformly from [lo, hi(scale)] when training Setting 1
ISO_TRAIN_WIDTH = {2: (0.2, 2.0), 3: (0.2, 3.0), 4: (0.2, 4.0)}
ANISO_TRAIN_WIDTH = (0.6, 5.0)
ANISO_KERNEL_SIZE = {2: 11, 3: 21, 4: 31}


@dataclass
class TrainConfig:
    net: NetworkConfig = field(default_factory=NetworkConfig)
    patch: int = 64                 # LR patch side; HR crops are patch * scale
    batch: int = 8
    iters: int = 2000
    lr0: float = 4e-4
    lr_halve_every: int = 200_000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    setting: str = "iso"
    seed: int = 0
    loss: str = "l1"                # or "rmse"
    noise_sigma: float = 0.0        # training AWGN level, 0-255 units
    augment: bool = True            # random 90-degree rotation + horizontal flip
    width_range: tuple | None = None  # overrides the per-setting kernel width range
    noise_range: tuple = (0.0, 10.0)  # per-patch sigma range for the varying setting
    log_every: int = 10
    checkpoint_every: int = 1000    # 0 disables periodic checkpoints

    def __post_init__(self):
        if self.patch < 1 or self.batch < 1 or self.iters < 1:
            raise ValueError("patch, batch and iters must be positive")
        if self.lr0 <= 0 or self.lr_halve_every < 1:
            raise ValueError("lr0 must be positive and lr_halve_every >= 1")
        if self.setting not in SETTINGS:
            raise ValueError(f"setting must be one of {SETTINGS}, got '{self.setting}'")
        if self.loss not in ("l1", "rmse"):
            raise ValueError(f"loss must be 'l1' or 'rmse', got '{self.loss}'")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


def _parse_scalar(text):
    text = text.strip()
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def parse_config_text(text):
    """Flat key -> scalar dict from config file text."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got '{raw.strip()}'")
        key, val = line.split("=", 1)
        values[key.strip()] = _parse_scalar(val)
    return values


def build_train_config(values):
    """TrainConfig from a flat dict; unknown keys are rejected."""
    net_fields = {f.name for f in fields(NetworkConfig)}
    train_fields = {f.name for f in fields(TrainConfig)} - {"net"}
    net_kwargs = {}
    train_kwargs = {}
    for key, val in values.items():
        if val is None:
            continue
        if key.startswith("net."):
            name = key[4:]
            if name not in net_fields:
                raise ValueError(f"unknown config key '{key}'")
            net_kwargs[name] = val
        else:
            name = key[6:] if key.startswith("train.") else key
            if name not in train_fields:
                raise ValueError(f"unknown config key '{key}'")
            if name in ("width_range", "noise_range") and isinstance(val, str):
                lo, hi = val.split(",")
                val = (float(lo), float(hi))
            train_kwargs[name] = val
    return TrainConfig(net=NetworkConfig(**net_kwargs), **train_kwargs)


def load_train_config(path, overrides=None):
    with open(path) as fh:
        values = parse_config_text(fh.read())
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    return build_train_config(values)
