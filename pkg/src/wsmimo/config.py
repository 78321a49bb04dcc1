"""Experiment configuration: dataclasses plus the INI-style config file."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .geometry import AntennaGeometry, GeometryError, Rect, Target, make_geometry
from .scene import RadarConfig, SceneModel
from .waveform import PhaseCodeSet, hadamard_codes


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


@dataclass(frozen=True)
class GeometryConfig:
    layout: str = "circular"
    n_tx: int = 3
    n_rx: int = 10
    tx_radius: float = 5000.0
    rx_radius: float = 3000.0
    arm_length: float = 3000.0
    rx_box: tuple[float, float, float, float] = (-3000.0, 3000.0, -3000.0, 3000.0)
    region: tuple[float, float, float, float] = (1000.0, 1200.0, 1000.0, 1200.0)
    seed: int = 0
    tx: tuple[tuple[float, float], ...] | None = None  # explicit layout only
    rx: tuple[tuple[float, float], ...] | None = None

    def build(self) -> AntennaGeometry:
        region = Rect(*self.region)
        try:
            if self.layout == "explicit":
                if self.tx is None or self.rx is None:
                    raise ConfigError("explicit layout needs tx and rx position lists")
                return AntennaGeometry(np.array(self.tx), np.array(self.rx), region)
            return make_geometry(self.layout, n_tx=self.n_tx, n_rx=self.n_rx,
                                 tx_radius=self.tx_radius, rx_radius=self.rx_radius,
                                 arm_length=self.arm_length, rx_box=Rect(*self.rx_box),
                                 region=region, seed=self.seed)
        except GeometryError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class SvtConfig:
    threshold: float | None = None
    step: float | None = None
    tol: float = 1e-4
    max_iters: int = 500
    noise: str = "known"  # known | estimate | none

    def __post_init__(self):
        if self.noise not in ("known", "estimate", "none"):
            raise ConfigError(f"svt noise mode must be known/estimate/none, got {self.noise!r}")


@dataclass(frozen=True)
class GridConfig:
    position_step: float = 1.0
    velocity_min: float = 0.0
    velocity_max: float = 20.0
    velocity_step: float = 0.5


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    radar: RadarConfig = field(default_factory=RadarConfig)
    waveform_family: str = "hadamard"
    targets: tuple[tuple[float, float, float, float], ...] = ((1100.0, 1100.0, 10.0, 10.0),)
    reflectivity: complex = 1.0 + 0.0j
    snr_db: tuple[float, ...] = (20.0,)
    sampling_rate: tuple[float, ...] = (0.5,)
    trials: int = 100
    master_seed: int = 20260810
    svt: SvtConfig = field(default_factory=SvtConfig)
    grids: GridConfig = field(default_factory=GridConfig)
    estimate_geometric: bool = True
    estimate_velocity: bool = True
    estimate_subsampled: bool = True
    out_dir: str = "out"
    out_format: str = "csv"
    threads: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.waveform_family != "hadamard":
            raise ConfigError(f"unsupported waveform family {self.waveform_family!r}")
        if not self.snr_db or not self.sampling_rate:
            raise ConfigError("sweep axes must be nonempty")
        if self.out_format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")

    def build_codes(self) -> PhaseCodeSet:
        return hadamard_codes(self.geometry.n_tx if self.geometry.tx is None
                              else len(self.geometry.tx),
                              self.radar.n_chips, self.radar.t_b)

    def build_targets(self) -> tuple[Target, ...]:
        return tuple(Target(position=(x, y), velocity=(vx, vy))
                     for x, y, vx, vy in self.targets)

    def build_scene(self, geometry: AntennaGeometry | None = None) -> SceneModel:
        geo = geometry if geometry is not None else self.geometry.build()
        targets = self.build_targets()
        beta = np.full((geo.n_tx, geo.n_rx, len(targets)), self.reflectivity,
                       dtype=complex)
        return SceneModel(geometry=geo, targets=targets, config=self.radar,
                          reflectivities=beta)


def _floats(text: str) -> list[float]:
    parts = [p for chunk in text.split(";") for p in chunk.split(",")]
    return [float(p) for p in parts if p.strip()]


def _point_list(text: str) -> tuple[tuple[float, float], ...]:
    pts = []
    for chunk in text.split(";"):
        vals = [float(p) for p in chunk.split(",") if p.strip()]
        if not vals:
            continue
        if len(vals) != 2:
            raise ConfigError(f"expected x,y pairs, got {chunk!r}")
        pts.append((vals[0], vals[1]))
    return tuple(pts)


def parse_config(path) -> ExperimentConfig:
    """Load an experiment description from a key = value INI file.

    Every key is optional; omitted values fall back to the reference
    configuration (three transmitters / ten receivers on circles, one target
    at (1100, 1100) moving at (10, 10) m/s).  See ``write_config`` for a
    template with all keys spelled out.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc

    try:
        return _config_from_parser(cp)
    except (ValueError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad value in {path}: {exc}") from exc


def _config_from_parser(cp: configparser.ConfigParser) -> ExperimentConfig:
    g = cp["geometry"] if cp.has_section("geometry") else {}
    region = tuple(_floats(g.get("region", "1000,1200,1000,1200")))
    rx_box = tuple(_floats(g.get("rx_box", "-3000,3000,-3000,3000")))
    if len(region) != 4 or len(rx_box) != 4:
        raise ConfigError("region and rx_box need four numbers: x_min,x_max,y_min,y_max")
    geometry = GeometryConfig(
        layout=g.get("layout", "circular"),
        n_tx=int(g.get("n_tx", 3)),
        n_rx=int(g.get("n_rx", 10)),
        tx_radius=float(g.get("tx_radius", 5000.0)),
        rx_radius=float(g.get("rx_radius", 3000.0)),
        arm_length=float(g.get("arm_length", 3000.0)),
        rx_box=rx_box, region=region,
        seed=int(g.get("seed", 0)),
        tx=_point_list(g["tx"]) if "tx" in g else None,
        rx=_point_list(g["rx"]) if "rx" in g else None,
    )

    r = cp["radar"] if cp.has_section("radar") else {}
    w = cp["waveform"] if cp.has_section("waveform") else {}
    delta_f = r.get("delta_f", "50e6").strip()
    radar = RadarConfig(
        f_c=float(r.get("f_c", 5e9)),
        bandwidth=float(r.get("bandwidth", 10e6)),
        n_chips=int(w.get("n_chips", 64)),
        n_pulses=int(r.get("n_pulses", 128)),
        t_pri=float(r.get("t_pri", 25e-3)),
        t_b=float(r.get("t_b", 1e-7)),
        energy=float(r.get("energy", 1.0)),
        delta_f=float(delta_f) if delta_f else None,
    )

    s = cp["scene"] if cp.has_section("scene") else {}
    targets = []
    for chunk in s.get("targets", "1100,1100,10,10").split(";"):
        vals = [float(p) for p in chunk.split(",") if p.strip()]
        if not vals:
            continue
        if len(vals) != 4:
            raise ConfigError(f"target needs x,y,vx,vy, got {chunk!r}")
        targets.append(tuple(vals))

    sw = cp["sweep"] if cp.has_section("sweep") else {}
    sv = cp["svt"] if cp.has_section("svt") else {}
    threshold = sv.get("threshold", "").strip()
    step = sv.get("step", "").strip()
    gr = cp["grids"] if cp.has_section("grids") else {}
    est = cp["estimation"] if cp.has_section("estimation") else {}
    out = cp["output"] if cp.has_section("output") else {}

    def _bool(section, key, default):
        raw = section.get(key, None) if hasattr(section, "get") else None
        if raw is None:
            return default
        val = raw.strip().lower()
        if val in ("1", "true", "yes", "on"):
            return True
        if val in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key} must be a boolean, got {raw!r}")

    return ExperimentConfig(
        geometry=geometry,
        radar=radar,
        waveform_family=w.get("family", "hadamard"),
        targets=tuple(targets),
        reflectivity=complex(s.get("reflectivity", "1")),
        snr_db=tuple(_floats(sw.get("snr_db", "20"))),
        sampling_rate=tuple(_floats(sw.get("sampling_rate", "0.5"))),
        trials=int(sw.get("trials", 100)),
        master_seed=int(sw.get("master_seed", 20260810)),
        svt=SvtConfig(
            threshold=float(threshold) if threshold else None,
            step=float(step) if step else None,
            tol=float(sv.get("tol", 1e-4)),
            max_iters=int(sv.get("max_iters", 500)),
            noise=sv.get("noise", "known"),
        ),
        grids=GridConfig(
            position_step=float(gr.get("position_step", 1.0)),
            velocity_min=float(gr.get("velocity_min", 0.0)),
            velocity_max=float(gr.get("velocity_max", 20.0)),
            velocity_step=float(gr.get("velocity_step", 0.5)),
        ),
        estimate_geometric=_bool(est, "geometric", True),
        estimate_velocity=_bool(est, "velocity", True),
        estimate_subsampled=_bool(est, "subsampled", True),
        out_dir=out.get("directory", "out"),
        out_format=out.get("format", "csv"),
        threads=int(out.get("threads", 1)),
    )


def write_config(cfg: ExperimentConfig, path) -> None:
    """Write a config file that parses back to ``cfg`` (documentation template)."""
    cp = configparser.ConfigParser()
    cp["geometry"] = {
        "layout": cfg.geometry.layout,
        "n_tx": str(cfg.geometry.n_tx),
        "n_rx": str(cfg.geometry.n_rx),
        "tx_radius": repr(cfg.geometry.tx_radius),
        "rx_radius": repr(cfg.geometry.rx_radius),
        "arm_length": repr(cfg.geometry.arm_length),
        "rx_box": ",".join(repr(v) for v in cfg.geometry.rx_box),
        "region": ",".join(repr(v) for v in cfg.geometry.region),
        "seed": str(cfg.geometry.seed),
    }
    if cfg.geometry.tx is not None:
        cp["geometry"]["tx"] = "; ".join(f"{x!r},{y!r}" for x, y in cfg.geometry.tx)
    if cfg.geometry.rx is not None:
        cp["geometry"]["rx"] = "; ".join(f"{x!r},{y!r}" for x, y in cfg.geometry.rx)
    cp["waveform"] = {"family": cfg.waveform_family, "n_chips": str(cfg.radar.n_chips)}
    cp["radar"] = {
        "f_c": repr(cfg.radar.f_c),
        "delta_f": "" if cfg.radar.delta_f is None else repr(cfg.radar.delta_f),
        "bandwidth": repr(cfg.radar.bandwidth),
        "n_pulses": str(cfg.radar.n_pulses),
        "t_pri": repr(cfg.radar.t_pri),
        "t_b": repr(cfg.radar.t_b),
        "energy": repr(cfg.radar.energy),
    }
    cp["scene"] = {
        "targets": "; ".join(",".join(repr(v) for v in t) for t in cfg.targets),
        "reflectivity": str(cfg.reflectivity),
    }
    cp["sweep"] = {
        "snr_db": ",".join(repr(v) for v in cfg.snr_db),
        "sampling_rate": ",".join(repr(v) for v in cfg.sampling_rate),
        "trials": str(cfg.trials),
        "master_seed": str(cfg.master_seed),
    }
    cp["svt"] = {
        "threshold": "" if cfg.svt.threshold is None else repr(cfg.svt.threshold),
        "step": "" if cfg.svt.step is None else repr(cfg.svt.step),
        "tol": repr(cfg.svt.tol),
        "max_iters": str(cfg.svt.max_iters),
        "noise": cfg.svt.noise,
    }
    cp["grids"] = {
        "position_step": repr(cfg.grids.position_step),
        "velocity_min": repr(cfg.grids.velocity_min),
        "velocity_max": repr(cfg.grids.velocity_max),
        "velocity_step": repr(cfg.grids.velocity_step),
    }
    cp["estimation"] = {
        "geometric": str(cfg.estimate_geometric).lower(),
        "velocity": str(cfg.estimate_velocity).lower(),
        "subsampled": str(cfg.estimate_subsampled).lower(),
    }
    cp["output"] = {
        "directory": cfg.out_dir,
        "format": cfg.out_format,
        "threads": str(cfg.threads),
    }
    with open(path, "w") as fh:
        cp.write(fh)


def default_config() -> ExperimentConfig:
    return ExperimentConfig()
