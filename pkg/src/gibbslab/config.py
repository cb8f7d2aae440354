"""Run configuration: flat ``key = value`` files with JSON values."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

from . import __version__
from .spectral import InteractionSpec


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


def _default_what():
    return [[0, 1.0], [1, 0.5], [-1, 0.5]]


@dataclass
class RunConfig:
    d: int = 1
    kappa: float = 1.0
    K: float = 50.0
    what: list = field(default_factory=_default_what)
    T_grid: list = field(default_factory=lambda: [2.0, 4.0, 8.0, 16.0])
    n_max: int | None = None
    tail_target: float = 1e-3
    samples: int = 200000
    seed: int = 1
    covariance: str = "thermal"
    renormalized: bool = False
    nu: float = -1.0
    k_split: float = 2.0
    P: list = field(default_factory=lambda: [0])
    epsilon: float | None = None
    fd_step: float = 1e-4
    nodes: int = 32
    trials: int = 20
    out_dir: str = "out"

    # not part of the hash: they change where and how, not what, is computed
    _UNHASHED = ("out_dir",)

    def interaction(self) -> InteractionSpec:
        return InteractionSpec(_what_dict(self.what), d=self.d)

    def hash_payload(self) -> dict:
        d = asdict(self)
        for k in self._UNHASHED:
            d.pop(k, None)
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.hash_payload(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def provenance(self) -> dict:
        return {"config_hash": self.config_hash(), "version": __version__}

    def replace(self, **kw) -> "RunConfig":
        d = asdict(self)
        d.update(kw)
        return RunConfig.from_dict(d)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        errors = [f"unknown key '{k}'" for k in raw if k not in names]
        kw = {k: v for k, v in raw.items() if k in names}
        if kw.get("d") == 2:
            kw.setdefault("what", [[[0, 0], 1.0], [[1, 0], 0.25], [[-1, 0], 0.25],
                                   [[0, 1], 0.25], [[0, -1], 0.25]])
            kw.setdefault("T_grid", [1.0, 2.0, 4.0])
            kw.setdefault("renormalized", True)
        try:
            cfg = cls(**kw)
        except TypeError as exc:
            raise ConfigError(errors + [str(exc)])
        errors += cfg.validate()
        if errors:
            raise ConfigError(errors)
        # normalize numeric types so that "1" and "1.0" hash alike
        for name in _FLOAT_FIELDS:
            if getattr(cfg, name) is not None:
                setattr(cfg, name, float(getattr(cfg, name)))
        cfg.T_grid = [float(t) for t in cfg.T_grid]
        cfg.what = [[k, float(v)] for k, v in cfg.what]
        return cfg

    def validate(self) -> list:
        errs = []

        def positive(name, val, integer=False):
            ok = isinstance(val, (int, float)) and not isinstance(val, bool) and val > 0
            if ok and integer and int(val) != val:
                ok = False
            if not ok:
                errs.append(f"{name}: must be a positive {'integer' if integer else 'number'}, got {val!r}")

        if self.d not in (1, 2):
            errs.append(f"d: only 1 or 2 supported, got {self.d!r}")
        positive("kappa", self.kappa)
        positive("K", self.K)
        positive("samples", self.samples, integer=True)
        positive("fd_step", self.fd_step)
        positive("nodes", self.nodes, integer=True)
        positive("trials", self.trials, integer=True)
        if self.n_max is not None:
            positive("n_max", self.n_max, integer=True)
        if not (isinstance(self.tail_target, (int, float)) and 0 < self.tail_target < 1):
            errs.append(f"tail_target: must lie in (0, 1), got {self.tail_target!r}")
        if self.epsilon is not None:
            positive("epsilon", self.epsilon)
        if not isinstance(self.T_grid, list) or not self.T_grid:
            errs.append("T_grid: must be a nonempty list")
        else:
            for t in self.T_grid:
                positive("T_grid entry", t)
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or not 0 <= self.seed < 2 ** 64:
            errs.append(f"seed: must be an unsigned 64-bit integer, got {self.seed!r}")
        if self.covariance not in ("thermal", "massive"):
            errs.append(f"covariance: must be 'thermal' or 'massive', got {self.covariance!r}")
        if not isinstance(self.renormalized, bool):
            errs.append("renormalized: must be true or false")
        if not isinstance(self.P, list) or not self.P or not all(isinstance(p, int) for p in self.P):
            errs.append("P: must be a nonempty list of mode indices")
        errs += self._validate_what()
        return errs

    def _validate_what(self) -> list:
        if not isinstance(self.what, list):
            return ["what: must be a list of [k, value] pairs"]
        errs, seen = [], set()
        for entry in self.what:
            if not (isinstance(entry, (list, tuple)) and len(entry) == 2):
                errs.append(f"what: entry {entry!r} is not a [k, value] pair")
                continue
            k, v = entry
            key = tuple(k) if isinstance(k, (list, tuple)) else (k,)
            if len(key) != self.d:
                errs.append(f"what: k={k!r} does not have dimension d={self.d}")
            if key in seen:
                errs.append(f"what: duplicate entry for k={k!r}")
            seen.add(key)
            if not isinstance(v, (int, float)) or v != v:
                errs.append(f"what: value for k={k!r} is not a number")
            elif v < 0:
                errs.append(f"what: value {v} at k={k!r} is negative; the interaction must be of "
                            "positive type (nonnegative Fourier coefficients)")
        if not errs:
            try:
                InteractionSpec(_what_dict(self.what), d=self.d)
            except ValueError as exc:
                errs.append(f"what: {exc}")
        return errs


_FLOAT_FIELDS = ("kappa", "K", "tail_target", "nu", "k_split", "epsilon", "fd_step")


def _what_dict(pairs) -> dict:
    return {tuple(k) if isinstance(k, (list, tuple)) else (k,): v for k, v in pairs}


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_config_text(text: str) -> RunConfig:
    raw, errors = {}, []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value'")
            continue
        key, val = (s.strip() for s in line.split("=", 1))
        if key in raw:
            errors.append(f"line {lineno}: key '{key}' given twice")
        raw[key] = _parse_value(val)
    if errors:
        raise ConfigError(errors)
    return RunConfig.from_dict(raw)


def parse_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config_text(fh.read())


def format_config(cfg: RunConfig) -> str:
    lines = [f"{k} = {json.dumps(v)}" for k, v in asdict(cfg).items()]
    return "\n".join(lines) + "\n"
