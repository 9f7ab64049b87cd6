"""Run configuration shared by every CLI stage, serialised as ``key = value`` text."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

import numpy as np

from .exceptions import ValidationError


@dataclass
class RunConfig:
    # ingest
    stride: int = 1
    # fhdof
    patch: int = 30
    hessian_threshold: float = 0.002
    window_sigma: float = 1.5
    poly_n: int = 7
    iterations: int = 3
    smoothing_radius: int = 7
    levels: int = 1
    working_scale: float = 1.0
    # patchnorm baseline / fallback frame feature
    grid_w: int = 64
    grid_h: int = 36
    norm_patch: int = 8
    # seqmatch
    ds: int = 10
    v_min: float = 0.8
    v_max: float = 1.25
    v_step: float = 0.05
    uniqueness_mu: float = 0.95
    window_exclude: int = 10
    enhance_window: int = 11
    # tpdf
    window: int = 20
    pooling: str = "approx"
    gap_max: int = 20
    n_chains: int = 1
    threshold_k: float = 0.5
    ranksvm_c: float = 1e-3
    ranksvm_iterations: int = 300
    # eval
    thresholds: str = "0:1:0.05"

    def __post_init__(self):
        if self.pooling not in ("approx", "ranksvm"):
            raise ValidationError(f"pooling must be approx or ranksvm, got {self.pooling!r}")
        self.threshold_values()

    def threshold_values(self) -> list[float]:
        """Parse ``start:stop:step`` (inclusive) or a comma list."""
        text = self.thresholds.strip()
        try:
            if ":" in text:
                start, stop, step = (float(x) for x in text.split(":"))
                if step <= 0:
                    raise ValueError
                count = int(np.floor((stop - start) / step + 1e-9)) + 1
                return [round(start + k * step, 10) for k in range(count)]
            vals = [float(x) for x in text.split(",") if x.strip()]
        except ValueError as exc:
            raise ValidationError(f"bad threshold sweep {self.thresholds!r}") from exc
        if not vals or vals != sorted(vals):
            raise ValidationError("threshold sweep must be non-empty and ascending")
        return vals

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        return cls.from_mapping(_parse_kv(text))

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        types = {f.name: f.type for f in fields(cls)}
        unknown = set(values) - set(types)
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for key, raw in values.items():
            kwargs[key] = _coerce(key, raw, types[key])
        return cls(**kwargs)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))


def _parse_kv(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValidationError(f"config line {lineno}: expected key = value")
        out[key.strip()] = value.strip()
    return out


def _coerce(key, raw, typ):
    if not isinstance(raw, str):
        return raw
    try:
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
    except ValueError as exc:
        raise ValidationError(f"config {key}: cannot parse {raw!r}") from exc
    return raw
