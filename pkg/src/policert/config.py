"""Run configuration: one JSON document drives a whole verification run.

The resolved configuration (defaults filled in) is echoed byte-identically
into every report so runs are reproducible from their outputs alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(Exception):
    pass


_DEFAULTS = {
    "initial_region": None,
    "env_overrides": {},
    "template": {"kind": "rect"},
    "p_safe": None,
    "containment": True,
    "conservative": False,
    "seed": 0,
    "samples": 1000,
    "bins": 10,
    "min_frac": 0.1,
    "budgets": {"leaves": 4096, "states": 20000, "bnb_nodes": 10000},
    "threads": 1,
}


@dataclass
class RunConfig:
    environment: str
    network: str | None
    horizon: int
    phi: float
    initial_region: str | None = None
    env_overrides: dict = field(default_factory=dict)
    template_kind: str = "rect"
    template_directions: list | None = None
    p_safe: float | None = None
    containment: bool = True
    conservative: bool = False
    seed: int = 0
    samples: int = 1000
    bins: int = 10
    min_frac: float = 0.1
    leaf_budget: int = 4096
    state_budget: int = 20000
    node_budget: int = 10000
    threads: int = 1

    def resolved_dict(self) -> dict:
        """Canonical JSON-ready form, echoed into reports."""
        template: dict = {"kind": self.template_kind}
        if self.template_directions is not None:
            template["directions"] = self.template_directions
        return {
            "environment": self.environment,
            "initial_region": self.initial_region,
            "env_overrides": self.env_overrides,
            "network": self.network,
            "template": template,
            "horizon": self.horizon,
            "phi": self.phi,
            "p_safe": self.p_safe,
            "containment": self.containment,
            "conservative": self.conservative,
            "seed": self.seed,
            "samples": self.samples,
            "bins": self.bins,
            "min_frac": self.min_frac,
            "budgets": {
                "leaves": self.leaf_budget,
                "states": self.state_budget,
                "bnb_nodes": self.node_budget,
            },
            "threads": self.threads,
        }


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def parse_config(doc: dict, base_dir: Path | None = None) -> RunConfig:
    """Validate a config document and fill defaults."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    for key in ("environment", "horizon", "phi"):
        _require(key in doc, f"missing required field {key!r}")

    known = {"environment", "network", "horizon", "phi", "initial_region",
             "env_overrides", "template", "p_safe", "containment",
             "conservative", "seed", "samples", "bins", "min_frac",
             "budgets", "threads"}
    unknown = set(doc) - known
    _require(not unknown, f"unknown config fields: {sorted(unknown)}")

    phi = float(doc["phi"])
    _require(0.0 < phi <= 1.0, "phi must be in (0,1]")
    horizon = int(doc["horizon"])
    _require(horizon >= 1, "horizon must be >= 1")

    template = doc.get("template", _DEFAULTS["template"])
    kind = template.get("kind", "rect")
    _require(kind in ("rect", "oct", "custom"), f"template kind {kind!r} not in rect|oct|custom")
    directions = template.get("directions")
    if kind == "custom":
        _require(directions is not None, "custom template needs directions")

    network = doc.get("network")
    if network is not None:
        path = Path(network)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        _require(path.exists(), f"network file not found: {path}")
        network = str(path)

    budgets = dict(_DEFAULTS["budgets"])
    budgets.update(doc.get("budgets", {}))
    p_safe = doc.get("p_safe")
    if p_safe is not None:
        p_safe = float(p_safe)
        _require(0.0 <= p_safe <= 1.0, "p_safe must be in [0,1]")

    min_frac = float(doc.get("min_frac", _DEFAULTS["min_frac"]))
    _require(0.0 < min_frac <= 0.5, "min_frac must be in (0, 0.5]")
    samples = int(doc.get("samples", _DEFAULTS["samples"]))
    _require(samples >= 2, "samples must be >= 2")

    return RunConfig(
        environment=str(doc["environment"]),
        network=network,
        horizon=horizon,
        phi=phi,
        initial_region=doc.get("initial_region"),
        env_overrides=dict(doc.get("env_overrides", {})),
        template_kind=kind,
        template_directions=directions,
        p_safe=p_safe,
        containment=bool(doc.get("containment", True)),
        conservative=bool(doc.get("conservative", False)),
        seed=int(doc.get("seed", 0)),
        samples=samples,
        bins=int(doc.get("bins", _DEFAULTS["bins"])),
        min_frac=min_frac,
        leaf_budget=int(budgets["leaves"]),
        state_budget=int(budgets["states"]),
        node_budget=int(budgets["bnb_nodes"]),
        threads=int(doc.get("threads", _DEFAULTS["threads"])),
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid config JSON: {exc}") from exc
    return parse_config(doc, base_dir=path.parent)


def canonical_json(obj) -> str:
    """Deterministic serialization used for reports and dumps."""
    return json.dumps(obj, sort_keys=True, indent=2)
