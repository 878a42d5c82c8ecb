"""Dataset generation, CSV/JSON persistence, and run manifests.

File formats (UTF-8, LF line endings, floats written with ``repr`` so they
round-trip exactly):

* dataset: header ``d,n,k_planted_or_0``, then the d rows of X, then y on one
  line. Planted weights go to a sibling ``<stem>.planted.csv``.
* parameters: header ``k,d``, then v on one line, then the k rows of W. The
  planted sibling uses the header ``k,d,activation``.
* sweep results: header ``param,successes,trials,probability``.
"""
import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .activations import parse_activation
from .errors import LandscapeError, ParseError
from .landscape import ExperimentTable, LogisticFit, TableRow
from .network import Dataset, NetworkParams, PlantedModel
from .rng import Stream

SCHEMA_VERSION = 1


class OutputExistsError(LandscapeError, FileExistsError):
    pass


@dataclass(frozen=True)
class GeneratorConfig:
    """How to draw a dataset.

    ``v_star_kind`` is ``all_one``, ``all_nu`` (every entry ``nu``),
    ``mixed_sign`` (``d_plus`` entries +1 then ``d_minus`` entries -1) or
    ``custom`` (``custom_v``). ``weight_scheme`` is ``gaussian_over_sqrt_d``
    or ``custom``, which draws row directions uniformly and row norms and
    ``|v*|`` uniformly within the given bounds.
    """

    d: int
    n: int
    k: int
    label_kind: str = "planted"
    activation: str = "quad"
    weight_scheme: str = "gaussian_over_sqrt_d"
    bounds: Optional[tuple] = None
    v_star_kind: str = "all_one"
    nu: float = 1.0
    d_plus: int = 0
    d_minus: int = 0
    custom_v: Optional[tuple] = None
    master_seed: int = 0
    require_sign_counts: bool = False

    def __post_init__(self):
        if min(self.d, self.n, self.k) < 1:
            raise ValueError("d, n and k must be positive")
        if self.label_kind not in ("planted", "gaussian_random"):
            raise ValueError("label_kind must be 'planted' or 'gaussian_random'")
        if self.weight_scheme not in ("gaussian_over_sqrt_d", "custom"):
            raise ValueError("weight_scheme must be 'gaussian_over_sqrt_d' or 'custom'")
        if self.weight_scheme == "custom":
            if self.bounds is None or len(self.bounds) != 4:
                raise ValueError("custom weights need bounds (v_min, v_max, w_min, w_max)")
            v_min, v_max, w_min, w_max = self.bounds
            if not (0 < v_min <= v_max and 0 < w_min <= w_max):
                raise ValueError("bounds must satisfy 0 < v_min <= v_max and 0 < w_min <= w_max")
        if self.v_star_kind not in ("all_one", "all_nu", "mixed_sign", "custom"):
            raise ValueError("unknown v_star_kind")
        if self.v_star_kind == "all_nu" and self.nu == 0:
            raise ValueError("nu must be non-zero")
        if self.v_star_kind == "mixed_sign":
            if self.d_plus < 0 or self.d_minus < 0 or self.d_plus + self.d_minus != self.k:
                raise ValueError("mixed_sign needs d_plus + d_minus == k")
            if self.require_sign_counts and (self.d_plus < self.d or self.d_minus < self.d):
                raise ValueError("mixed_sign needs at least d positive and d negative entries")
        if self.v_star_kind == "custom":
            if self.custom_v is None or len(self.custom_v) != self.k:
                raise ValueError("custom v_star needs k entries")
        parse_activation(self.activation)

    def to_dict(self):
        return asdict(self)


def _v_star(cfg, stream):
    if cfg.v_star_kind == "all_one":
        v = np.ones(cfg.k)
    elif cfg.v_star_kind == "all_nu":
        v = np.full(cfg.k, float(cfg.nu))
    elif cfg.v_star_kind == "mixed_sign":
        v = np.concatenate([np.ones(cfg.d_plus), -np.ones(cfg.d_minus)])
    else:
        v = np.array(cfg.custom_v, dtype=float)
    if cfg.weight_scheme == "custom":
        v_min, v_max = cfg.bounds[0], cfg.bounds[1]
        mags = v_min + (v_max - v_min) * stream.spawn("v_mag").uniform(cfg.k)
        v = np.sign(v) * mags
    return v


def _w_star(cfg, stream):
    G = stream.spawn("W*").normal((cfg.k, cfg.d))
    if cfg.weight_scheme == "gaussian_over_sqrt_d":
        return G / math.sqrt(cfg.d)
    w_min, w_max = cfg.bounds[2], cfg.bounds[3]
    norms = w_min + (w_max - w_min) * stream.spawn("w_norm").uniform(cfg.k)
    return G / np.linalg.norm(G, axis=1, keepdims=True) * norms[:, None]


def generate_dataset(cfg):
    """Gaussian inputs with planted or N(0, 1) labels, reproducible from the seed."""
    s = Stream(cfg.master_seed, "dataset")
    X = s.spawn("X").normal((cfg.d, cfg.n))
    if cfg.label_kind == "gaussian_random":
        return Dataset(X, s.spawn("y").normal(cfg.n))
    spec = parse_activation(cfg.activation)
    v = _v_star(cfg, s)
    W = _w_star(cfg, s)
    y = v @ spec.value(W @ X)
    return Dataset(X, y, PlantedModel(v, W, spec))


def _check_writable(path, force):
    path = Path(path)
    if path.exists() and not force:
        raise OutputExistsError(f"{path} exists; pass --force to overwrite")
    return path


def _fmt_row(values):
    return ",".join(repr(float(x)) for x in values)


def _write_lines(path, lines, force):
    path = _check_writable(path, force)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")
    return path


def planted_sibling(path):
    path = Path(path)
    return path.with_name(path.stem + ".planted.csv")


def save_dataset(path, data, force=False):
    """Write a dataset, plus its planted sibling when provenance is present."""
    k = data.planted.v.shape[0] if data.planted is not None else 0
    lines = [f"{data.d},{data.n},{k}"]
    lines += [_fmt_row(row) for row in data.X]
    lines.append(_fmt_row(data.y))
    written = [_write_lines(path, lines, force)]
    if data.planted is not None:
        p = data.planted
        plines = [f"{p.v.shape[0]},{p.W.shape[1]},{p.activation.label}", _fmt_row(p.v)]
        plines += [_fmt_row(row) for row in p.W]
        written.append(_write_lines(planted_sibling(path), plines, force))
    return written


def _read_lines(path):
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def _numbers(text, path, lineno, expected=None):
    try:
        vals = [float(tok) for tok in text.split(",")]
    except ValueError:
        raise ParseError("expected comma-separated numbers", path, lineno) from None
    if expected is not None and len(vals) != expected:
        raise ParseError(f"expected {expected} values, found {len(vals)}", path, lineno)
    return vals


def _header_ints(text, path, count):
    parts = text.split(",")
    try:
        vals = [int(p) for p in parts[:count]]
    except ValueError:
        raise ParseError("malformed header", path, 1) from None
    if len(vals) != count:
        raise ParseError("malformed header", path, 1)
    return vals, parts[count:]


def load_dataset(path):
    path = Path(path)
    lines = _read_lines(path)
    if not lines:
        raise ParseError("empty file", path, 1)
    (d, n, k), _ = _header_ints(lines[0], path, 3)
    if d < 1 or n < 1 or k < 0:
        raise ParseError("header values out of range", path, 1)
    if len(lines) < d + 2:
        raise ParseError(f"expected {d + 2} lines, found {len(lines)}", path, len(lines))
    X = np.array([_numbers(lines[1 + i], path, 2 + i, n) for i in range(d)])
    y = np.array(_numbers(lines[1 + d], path, 2 + d, n))
    planted = None
    if k > 0:
        sib = planted_sibling(path)
        if not sib.exists():
            raise ParseError(f"planted sibling {sib} is missing", path, 1)
        plines = _read_lines(sib)
        (pk, pd), rest = _header_ints(plines[0], sib, 2)
        if pk != k or pd != d or not rest:
            raise ParseError("planted header does not match the dataset", sib, 1)
        spec = parse_activation(rest[0])
        if len(plines) < pk + 2:
            raise ParseError("truncated planted file", sib, len(plines))
        v = np.array(_numbers(plines[1], sib, 2, pk))
        W = np.array([_numbers(plines[2 + i], sib, 3 + i, pd) for i in range(pk)])
        planted = PlantedModel(v, W, spec)
    return Dataset(X, y, planted)


def save_params(path, params, force=False):
    lines = [f"{params.k},{params.d}", _fmt_row(params.v)]
    lines += [_fmt_row(row) for row in params.W]
    return _write_lines(path, lines, force)


def load_params(path):
    path = Path(path)
    lines = _read_lines(path)
    if not lines:
        raise ParseError("empty file", path, 1)
    (k, d), _ = _header_ints(lines[0], path, 2)
    if len(lines) < k + 2:
        raise ParseError(f"expected {k + 2} lines, found {len(lines)}", path, len(lines))
    v = np.array(_numbers(lines[1], path, 2, k))
    W = np.array([_numbers(lines[2 + i], path, 3 + i, d) for i in range(k)])
    return NetworkParams(v, W)


TABLE_HEADER = "param,successes,trials,probability"


def save_table(path, table, force=False):
    lines = [TABLE_HEADER]
    lines += [f"{r.param},{r.successes},{r.trials},{r.probability!r}" for r in table.rows]
    return _write_lines(path, lines, force)


def load_table(path):
    path = Path(path)
    lines = [ln for ln in _read_lines(path)]
    if not lines or lines[0].strip() != TABLE_HEADER:
        raise ParseError(f"expected header {TABLE_HEADER!r}", path, 1)
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ParseError("expected 4 fields", path, i)
        try:
            param, succ, trials = int(parts[0]), int(parts[1]), int(parts[2])
            prob = float(parts[3])
        except ValueError:
            raise ParseError("malformed row", path, i) from None
        if trials < 1 or not 0 <= succ <= trials:
            raise ParseError("successes must lie in [0, trials]", path, i)
        if prob != succ / trials:
            raise ParseError("probability is not successes/trials", path, i)
        rows.append(TableRow(param, succ, trials))
    return ExperimentTable(rows=rows)


def fit_to_dict(fit):
    return {"intercept": fit.intercept, "slope": fit.slope, "crossing": fit.crossing,
            "flags": list(fit.flags)}


def save_fit(path, fit, force=False):
    return _write_lines(path, [json.dumps(fit_to_dict(fit), sort_keys=True)], force)


def load_fit(path):
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return LogisticFit(raw["intercept"], raw["slope"], raw["crossing"], tuple(raw["flags"]))


def save_dat(path, table, force=False, x_label="param"):
    """Gnuplot-ready columns: parameter, empirical probability, fitted probability."""
    lines = [f"# {x_label} probability fitted"]
    fit = table.fit
    for r in table.rows:
        if fit is not None and fit.crossing is not None:
            fitted = 1.0 / (1.0 + math.exp(-(fit.intercept + fit.slope * r.param)))
        else:
            fitted = float("nan")
        lines.append(f"{r.param} {r.probability!r} {fitted!r}")
    return _write_lines(path, lines, force)


def config_hash(obj):
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class RunManifest:
    command: str
    parameters: dict
    master_seed: Optional[int] = None
    outputs: list = field(default_factory=list)
    artifact_version: str = __version__

    @property
    def config_hash(self):
        return config_hash({"command": self.command, "parameters": self.parameters,
                            "master_seed": self.master_seed,
                            "version": self.artifact_version})

    def to_dict(self):
        d = asdict(self)
        d["config_hash"] = self.config_hash
        d["schema_version"] = SCHEMA_VERSION
        d["outputs"] = [str(p) for p in self.outputs]
        return d


def save_manifest(path, manifest, force=False):
    return save_json(path, manifest.to_dict(), force)


def manifest_path(output):
    output = Path(output)
    return output.with_name(output.name + ".manifest.json")


def save_json(path, obj, force=False):
    text = json.dumps(obj, sort_keys=True, indent=2)
    return _write_lines(path, text.split("\n"), force)


def sibling(path, suffix):
    """``results.csv`` -> ``results<suffix>``."""
    path = Path(path)
    return path.with_name(path.stem + suffix)


def load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
