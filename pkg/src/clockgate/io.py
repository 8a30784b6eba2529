"""On-disk formats: pulse JSON, run config (INI), and commented CSV tables.

Pulse file::

    {"omega_max": 1.0, "total_duration": T,
     "segments": [{"duration": d, "phase": p}, ...],
     "edge": {"rise_duration": ..., "fall_duration": ..., "shape": "sine_squared",
              "phase_start": ..., "phase_end": ...} | null}

``omega_max`` is the amplitude in units of the peak Rabi frequency (0 gives
an idle pulse) and times are in units of ``1/Omega``.

CSV files start with ``# key: json`` comment lines carrying the resolved
run configuration, followed by a header row.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from clockgate.dynamics import Edge, PhaseProfile


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


def profile_to_dict(profile: PhaseProfile) -> dict:
    edge = profile.edge
    return {
        "omega_max": float(profile.scale),
        "total_duration": profile.total_duration,
        "segments": [{"duration": float(d), "phase": float(p)} for d, p in zip(profile.durations, profile.phases)],
        "edge": None
        if edge is None
        else {
            "rise_duration": edge.rise_duration,
            "fall_duration": edge.fall_duration,
            "shape": edge.shape,
            "phase_start": edge.phase_start,
            "phase_end": edge.phase_end,
        },
    }


def profile_from_dict(data: dict) -> PhaseProfile:
    try:
        segs = data["segments"]
        durations = [float(s["duration"]) for s in segs]
        phases = [float(s["phase"]) for s in segs]
        edge = data.get("edge")
        edge = None if edge is None else Edge(
            float(edge["rise_duration"]),
            float(edge["fall_duration"]),
            edge.get("shape", "sine_squared"),
            float(edge.get("phase_start", phases[0])),
            float(edge.get("phase_end", phases[-1])),
        )
        profile = PhaseProfile(np.array(durations), np.array(phases), edge, float(data.get("omega_max", 1.0)))
    except (KeyError, TypeError, IndexError) as exc:
        raise ConfigError(f"malformed pulse document: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    total = data.get("total_duration")
    if total is not None and not math.isclose(float(total), profile.total_duration, rel_tol=1e-9, abs_tol=1e-12):
        raise ConfigError(f"total_duration {total} disagrees with segments and edges ({profile.total_duration})")
    return profile


def save_pulse(path: Path, profile: PhaseProfile, extra: dict | None = None) -> None:
    doc = profile_to_dict(profile)
    if extra:
        doc.update(extra)
    write_json(path, doc)


def load_pulse(path: Path) -> PhaseProfile:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read pulse file {path}: {exc}") from exc
    return profile_from_dict(data)


def write_json(path: Path, payload: Any) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]], meta: dict | None = None) -> None:
    buf = io.StringIO()
    for key, value in (meta or {}).items():
        buf.write(f"# {key}: {json.dumps(value, sort_keys=True, default=_jsonable)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue())


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_csv(path: Path) -> tuple[dict, list[dict[str, str]]]:
    """Return ``(meta, rows)`` of a file written by :func:`write_csv`."""
    meta = {}
    body = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition(": ")
            meta[key] = json.loads(value)
        else:
            body.append(line)
    return meta, list(csv.DictReader(body))


@dataclass
class RunConfig:
    """Resolved run parameters; field names match the INI keys.

    INI layout (all keys optional)::

        [physical]
        b_gauss = 10
        delta_z_over_omega = 0.8
        omega_max_mhz = 23.75
        tau_us = 100

        [impurity]
        varsigma0 = 1e-3
        varsigma = 1.0

        [optimizer]
        n_periods = 1.497
        segment_count = 40
        restarts = 20
        max_iterations = 2000
        infidelity_target = 1e-7
        seed = 0
        split = 0.5
        edges = false
        edge_shape = sine_squared

    Two of ``b_gauss``, ``delta_z_over_omega``, ``omega_max_mhz`` fix the
    third; a full consistent triple is also accepted.
    """

    b_gauss: float | None = None
    delta_z_over_omega: float | None = None
    omega_max_mhz: float | None = None
    tau_us: float = 100.0
    varsigma0: float | None = None
    varsigma: float = 1.0
    n_periods: float | None = None
    segment_count: int = 40
    restarts: int = 20
    max_iterations: int = 2000
    infidelity_target: float = 1e-7
    seed: int = 0
    split: float = 0.5
    edges: bool = False
    edge_shape: str = "sine_squared"

    def resolve(self, require_ratio: bool = True) -> "RunConfig":
        """Fill the missing member of (b_gauss, ratio, Omega) and validate.

        Sweeps that set the ratio themselves pass ``require_ratio=False``.
        """
        from clockgate.atom import ZEEMAN_HZ_PER_GAUSS

        b, r, om = self.b_gauss, self.delta_z_over_omega, self.omega_max_mhz
        zeeman_mhz = None if b is None else ZEEMAN_HZ_PER_GAUSS * b / 1e6
        if b is not None and b < 0:
            raise ConfigError("b_gauss must be >= 0")
        if om is not None and om <= 0:
            raise ConfigError("omega_max_mhz must be > 0")
        if r is not None and r < 0:
            raise ConfigError("delta_z_over_omega must be >= 0")
        if r is None:
            if zeeman_mhz is not None and om is not None:
                r = zeeman_mhz / om
            elif require_ratio:
                raise ConfigError("give delta_z_over_omega, or b_gauss together with omega_max_mhz")
        elif zeeman_mhz is not None and om is None:
            if r == 0:
                raise ConfigError("delta_z_over_omega = 0 cannot fix omega_max_mhz from b_gauss")
            om = zeeman_mhz / r
        elif zeeman_mhz is not None and om is not None:
            if not math.isclose(zeeman_mhz / om, r, rel_tol=1e-9):
                raise ConfigError("b_gauss, omega_max_mhz and delta_z_over_omega are inconsistent")
        if self.tau_us <= 0:
            raise ConfigError("tau_us must be > 0")
        if self.varsigma0 is not None and (self.varsigma0 < 0 or self.varsigma <= 0):
            raise ConfigError("impurity needs varsigma0 >= 0 and varsigma > 0")
        out = RunConfig(**{f.name: getattr(self, f.name) for f in fields(self)})
        out.delta_z_over_omega, out.omega_max_mhz = r, om
        return out

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_SECTIONS = {
    "physical": ("b_gauss", "delta_z_over_omega", "omega_max_mhz", "tau_us"),
    "impurity": ("varsigma0", "varsigma"),
    "optimizer": (
        "n_periods",
        "segment_count",
        "restarts",
        "max_iterations",
        "infidelity_target",
        "seed",
        "split",
        "edges",
        "edge_shape",
    ),
}


def load_config(path: Path) -> dict:
    """Parse an INI run config into a flat dict of typed values."""
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    types = {f.name: f.type for f in fields(RunConfig)}
    values: dict = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SECTIONS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            try:
                if "bool" in types[key]:
                    values[key] = parser.getboolean(section, key)
                elif "int" in types[key]:
                    values[key] = int(raw)
                elif "float" in types[key]:
                    values[key] = float(raw)
                else:
                    values[key] = raw
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return values
