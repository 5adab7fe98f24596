"""Experiment configuration: YAML files validated against a JSON schema.

The schema lives next to this module (``config_schema.json``).  Loading
validates the document, fills defaults, resolves the objective by name and
checks cross-field constraints (dimensions, policy parameters, seeds, solver
stability) before any computation starts.

Example
-------
.. code-block:: yaml

    objective: {name: riccati_dist, params: {c: 1.0}}
    domain: {lower: [-2.0], upper: [2.0], nodes: [401]}
    lambda: 0.1
    solver: {dtau: 0.005, tol: 1.0e-6}
    trajectory:
      x0: [1.0]
      T: 20.0
      dt: 0.001
      policy: {kind: quasi, eta: 0.2, eps0: 1.0e-3, seed: 7}
    analysis: {r: 0.4, deltas: [0.1, 0.5]}
    output_dir: out/riccati
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, fields
from importlib import resources
from typing import Optional

import jsonschema
import yaml

from .grid import RectGrid
from .objectives import ObjectiveSpec, builtin_objective
from .solver import SolverOptions

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "schema"]

DEFAULT_OUTPUT_DIR = "hjbopt_out"

_ANALYSIS_DEFAULTS = {"r": 0.4, "floor": None, "deltas": [0.1, 0.25, 0.5], "growth_step": None,
                      "M": None, "tolerances": {"rate": 0.05, "add": None}}


class ConfigError(ValueError):
    """The configuration is malformed or inconsistent."""


def schema() -> dict:
    """The JSON schema of experiment configurations."""
    text = resources.files("hjbopt").joinpath("config_schema.json").read_text()
    return json.loads(text)


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment configuration.

    ``document`` is the normalised configuration (defaults filled in, seed
    override applied); its canonical JSON hash identifies the run.
    """

    document: dict
    objective: ObjectiveSpec
    grid: RectGrid
    lam: float
    solver: SolverOptions
    trajectory: Optional[dict]
    analysis: dict
    output_dir: str

    @property
    def policy(self) -> dict:
        if self.trajectory is None:
            raise ConfigError("configuration has no trajectory section")
        return self.trajectory["policy"]

    def digest(self) -> str:
        canon = json.dumps(self.document, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def _fail(msg: str):
    raise ConfigError(msg)


def parse_config(doc, seed: Optional[int] = None) -> ExperimentConfig:
    """Validate a configuration mapping; ``seed`` overrides policy seeds."""
    if not isinstance(doc, dict):
        _fail("configuration must be a mapping")
    try:
        jsonschema.validate(doc, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        _fail(f"schema violation at {where}: {exc.message}")
    doc = copy.deepcopy(doc)

    dom = doc["domain"]
    params = dict(doc["objective"].get("params") or {})
    if "lower" in dom:
        params["lower"] = dom["lower"]
    if "upper" in dom:
        params["upper"] = dom["upper"]
    try:
        obj = builtin_objective(doc["objective"]["name"], **params)
    except (TypeError, ValueError) as exc:
        _fail(f"objective: {exc}")
    dom.setdefault("lower", [float(v) for v in obj.lower])
    dom.setdefault("upper", [float(v) for v in obj.upper])
    if not (len(dom["lower"]) == len(dom["upper"]) == len(dom["nodes"]) == obj.dim):
        _fail(f"domain: lower/upper/nodes must all have length {obj.dim}")
    try:
        grid = RectGrid(dom["lower"], dom["upper"], dom["nodes"])
    except ValueError as exc:
        _fail(f"domain: {exc}")

    lam = float(doc["lambda"])
    allowed = {f.name for f in fields(SolverOptions)}
    sol = doc.setdefault("solver", {})
    try:
        opts = SolverOptions(**{k: v for k, v in sol.items() if k in allowed})
        opts.resolved(obj, grid)
    except ValueError as exc:
        _fail(f"solver: {exc}")

    traj = doc.get("trajectory")
    if traj is not None:
        if len(traj["x0"]) != obj.dim:
            _fail(f"trajectory: x0 must have length {obj.dim}")
        pol = traj.get("policy", "optimal")
        if isinstance(pol, str):
            pol = {"kind": pol}
        if pol["kind"] in ("quasi", "sampled"):
            if seed is not None:
                pol["seed"] = int(seed)
            if "seed" not in pol:
                _fail(f"trajectory: policy {pol['kind']!r} needs a seed (config or --seed)")
        if pol["kind"] == "sampled" and pol["delta_min"] > pol["delta_max"]:
            _fail("trajectory: sampled policy needs delta_min <= delta_max")
        traj["policy"] = pol

    ana = copy.deepcopy(_ANALYSIS_DEFAULTS)
    user = doc.get("analysis") or {}
    tol = {**ana["tolerances"], **(user.get("tolerances") or {})}
    ana.update(user)
    ana["tolerances"] = tol
    doc["analysis"] = ana
    out = doc.setdefault("output_dir", DEFAULT_OUTPUT_DIR)
    return ExperimentConfig(doc, obj, grid, lam, opts, traj, ana, out)


def load_config(path, seed: Optional[int] = None) -> ExperimentConfig:
    """Read and validate a YAML configuration file."""
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        _fail(f"cannot read configuration: {exc.strerror or exc}")
    except yaml.YAMLError as exc:
        _fail("malformed YAML: " + " ".join(str(exc).split()))
    return parse_config(doc, seed)
