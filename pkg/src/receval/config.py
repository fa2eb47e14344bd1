"""Evaluation configuration: nested dataclasses serialised as flat dotted-key JSON."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields
from typing import Optional

from .errors import ContractError
from .registration import IcpParams, RansacParams, RegistrationParams, SpinImageParams
from .synth import PinholeCamera


@dataclass
class CameraConfig:
    fx: float = 570.0
    fy: float = 570.0
    cx: float = 319.5
    cy: float = 239.5
    width: int = 640
    height: int = 480
    depth_scale: float = 0.1


@dataclass
class SynthConfig:
    n_frames: int = 608
    arc: float = 180.0           # degrees
    radius: float = 900.0        # mm
    frame_rate: float = 608 / 11.5
    start: Optional[float] = None  # degrees; None centres the sweep on the front
    normals: bool = True
    color: bool = False
    fuse_leaf: Optional[float] = None  # mm; None -> half the pixel footprint, 0 -> no downsampling


@dataclass
class EvalConfig:
    roi_radius: float = 100.0
    seed: int = 0
    leaf: float = 10.0
    mesh_unit: str = "mm"
    trajectory_unit: str = "m"
    max_dt: float = 0.02         # association window, s
    test: str = "wilcoxon"
    spin: SpinImageParams = field(default_factory=SpinImageParams)
    ransac: RansacParams = field(default_factory=RansacParams)
    icp: IcpParams = field(default_factory=IcpParams)
    camera: CameraConfig = field(default_factory=CameraConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    # keys that may be zero/negative/null
    _SIGNED = {"synth.start"}
    _NON_NEGATIVE = {"seed", "synth.fuse_leaf", "synth.arc", "camera.cx", "camera.cy"}
    _NULLABLE = {"spin.bin_size", "synth.start", "synth.fuse_leaf"}
    _CHOICES = {"mesh_unit": ("mm", "m"), "trajectory_unit": ("m", "mm"), "test": ("wilcoxon", "t")}

    def to_flat(self) -> dict:
        return _flatten(self)

    @classmethod
    def from_flat(cls, flat: dict, base: Optional["EvalConfig"] = None) -> "EvalConfig":
        cfg = dataclasses.replace(base) if base is not None else cls()
        cfg = cls.from_nested(_unflatten({**cfg.to_flat(), **_check_keys(flat)}))
        cfg.validate()
        return cfg

    @classmethod
    def from_nested(cls, d: dict) -> "EvalConfig":
        kw = {}
        for f in fields(cls):
            if f.name not in d:
                continue
            v = d[f.name]
            sub = _section_types().get(f.name)
            kw[f.name] = sub(**v) if sub else v
        return cls(**kw)

    def to_json(self) -> str:
        return json.dumps(self.to_flat(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvalConfig":
        try:
            d = json.loads(text)
        except ValueError as e:
            raise ContractError(f"config is not valid JSON: {e}") from None
        if not isinstance(d, dict):
            raise ContractError("config JSON must be an object of dotted keys")
        return cls.from_flat(d)

    def with_overrides(self, pairs) -> "EvalConfig":
        """Apply ``key=value`` strings; values are read as JSON, else as bare strings."""
        upd = {}
        for item in pairs:
            if "=" not in item:
                raise ContractError(f"override {item!r} is not key=value")
            k, v = item.split("=", 1)
            try:
                upd[k.strip()] = json.loads(v)
            except ValueError:
                upd[k.strip()] = v
        return EvalConfig.from_flat(upd, self)

    def validate(self):
        types = _leaf_types()
        for k, v in self.to_flat().items():
            t = types[k]
            if v is None:
                if k not in self._NULLABLE:
                    raise ContractError(f"{k} must not be null")
                continue
            if t is str:
                if k in self._CHOICES and v not in self._CHOICES[k]:
                    raise ContractError(f"{k} must be one of {self._CHOICES[k]}, got {v!r}")
                continue
            if t is bool:
                if not isinstance(v, bool):
                    raise ContractError(f"{k} must be true or false")
                continue
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ContractError(f"{k} must be numeric, got {v!r}")
            if t is int and int(v) != v:
                raise ContractError(f"{k} must be an integer, got {v!r}")
            if k in self._SIGNED:
                continue
            if k in self._NON_NEGATIVE:
                if v < 0:
                    raise ContractError(f"{k} must be non-negative, got {v!r}")
            elif not v > 0:
                raise ContractError(f"{k} must be positive, got {v!r}")
        self.spin.validate()
        if not 0 < self.ransac.confidence < 1:
            raise ContractError("ransac.confidence must lie in (0, 1)")
        self.pinhole()

    # ------------------------------------------------------------------ adapters

    def registration_params(self) -> RegistrationParams:
        return RegistrationParams(leaf=self.leaf, roi_radius=self.roi_radius, seed=self.seed,
                                  spin=dataclasses.replace(self.spin),
                                  ransac=dataclasses.replace(self.ransac),
                                  icp=dataclasses.replace(self.icp))

    def pinhole(self) -> PinholeCamera:
        c = self.camera
        return PinholeCamera(c.fx, c.fy, c.cx, c.cy, int(c.width), int(c.height), c.depth_scale)


def _section_types():
    return {f.name: f.default_factory for f in fields(EvalConfig)
            if f.default_factory is not dataclasses.MISSING}


def _flatten(obj, prefix=""):
    out = {}
    for f in fields(obj):
        v = getattr(obj, f.name)
        key = prefix + f.name
        if dataclasses.is_dataclass(v):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _unflatten(flat):
    nested = {}
    for k, v in flat.items():
        head, _, rest = k.partition(".")
        if rest:
            nested.setdefault(head, {})[rest] = v
        else:
            nested[head] = v
    return nested


def _leaf_types():
    types = {}
    hints = {"float": float, "int": int, "str": str, "bool": bool,
             "Optional[float]": float, "Optional[int]": int}
    for f in fields(EvalConfig):
        sub = _section_types().get(f.name)
        if sub:
            for g in fields(sub()):
                types[f"{f.name}.{g.name}"] = hints[str(g.type)]
        else:
            types[f.name] = hints[str(f.type)]
    return types


def _check_keys(flat):
    known = _leaf_types()
    unknown = sorted(set(flat) - set(known))
    if unknown:
        raise ContractError(f"unknown config keys: {', '.join(unknown)}")
    out = {}
    for k, v in flat.items():
        # JSON has one number type; keep integers integral and floats float
        if known[k] is float and isinstance(v, int) and not isinstance(v, bool):
            v = float(v)
        out[k] = v
    return out
