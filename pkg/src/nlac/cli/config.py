"""JSON run configuration: schema validation, defaults, round-trip.

``RunConfig.from_dict(cfg.to_dict()) == cfg`` for every valid config, and
``to_dict`` always materializes every default.
"""
from dataclasses import dataclass, field, fields, asdict
import json
import math
from typing import Optional

from ..cases import CASES
from ..harness import PATHS, REFERENCES, family_delta0
from ..geometry import Domain
from ..solver import SolverConfig
from .expr import ExpressionError, parse_expression

FAMILIES = ("het-neumann", "het-dirichlet", "const-dirichlet", "local-neumann", "local-dirichlet")
KINDS = ("solve", "path", "sweep", "gamma", "inequality")


class ConfigError(ValueError):
    """Invalid configuration; maps to exit code 2."""


def _tuple(x, conv=float):
    if x is None:
        return None
    if isinstance(x, (str, bytes)) or not hasattr(x, "__iter__"):
        raise ConfigError(f"expected a list, got {x!r}")
    return tuple(conv(v) for v in x)


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}; allowed {sorted(names)}")
    try:
        return cls(**data)
    except ConfigError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


@dataclass(frozen=True)
class ProblemConfig:
    family: str = "het-neumann"
    d: int = 1
    p: float = 2.0
    beta: float = 0.0
    delta: Optional[float] = None
    sigma: Optional[float] = None
    domain: Optional[tuple] = None      # ((lo, hi), ...); default unit box

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "beta", float(self.beta))
        if self.d not in (1, 2):
            raise ConfigError("d must be 1 or 2")
        if not self.p > 1:
            raise ConfigError("p must exceed 1")
        if not 0 <= self.beta < self.d:
            raise ConfigError("beta must lie in [0, d)")
        if self.domain is None:
            object.__setattr__(self, "domain", tuple((0.0, 1.0) for _ in range(self.d)))
        else:
            dom = tuple(_tuple(side) for side in self.domain)
            if len(dom) != self.d or any(len(s) != 2 for s in dom):
                raise ConfigError("domain must list one [lo, hi] pair per dimension")
            Domain(dom)
            object.__setattr__(self, "domain", dom)
        if self.delta is not None and self.sigma is not None:
            raise ConfigError("give delta or sigma, not both")
        for key in ("delta", "sigma"):
            v = getattr(self, key)
            if v is not None:
                object.__setattr__(self, key, float(v))
                if not v > 0:
                    raise ConfigError(f"{key} must be positive")

    @property
    def domain_obj(self):
        return Domain(self.domain)

    @property
    def unit_box(self):
        return all(s == (0.0, 1.0) for s in self.domain)


@dataclass(frozen=True)
class DiscretizationConfig:
    n: int = 64
    degree: int = 1
    continuity: str = "CG"

    def __post_init__(self):
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "degree", int(self.degree))
        if self.n < 1:
            raise ConfigError("n must be at least 1")
        if self.degree not in (1, 2):
            raise ConfigError("degree must be 1 or 2")
        if self.continuity not in ("CG", "DG"):
            raise ConfigError("continuity must be CG or DG")


@dataclass(frozen=True)
class LoadConfig:
    case: Optional[str] = None
    f0: Optional[str] = None
    f1: Optional[tuple] = None          # one expression per component
    g: Optional[str] = None

    def __post_init__(self):
        exprs = [self.f0, self.g] + list(self.f1 or ())
        if self.case is not None:
            if self.case not in CASES:
                raise ConfigError(f"unknown manufactured case {self.case!r}; known {sorted(CASES)}")
            if any(e is not None for e in exprs):
                raise ConfigError("a manufactured case cannot be combined with load expressions")
        if self.f1 is not None:
            object.__setattr__(self, "f1", _tuple(self.f1, str))
        for e in [self.f0, self.g] + list(self.f1 or ()):
            if e is not None:
                try:
                    parse_expression(e)
                except ExpressionError as exc:
                    raise ConfigError(f"load expression {e!r}: {exc}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "solve"
    path: Optional[str] = None
    deltas: Optional[tuple] = None
    sigmas: Optional[tuple] = None
    ns: Optional[tuple] = None
    reference: str = "analytic"
    fine_n: Optional[int] = None
    eval_factor: int = 4
    warm_start: bool = True
    final_tol: Optional[float] = None
    min_order: Optional[float] = None
    require_decreasing: bool = True
    record_timing: bool = False
    function: Optional[str] = None      # gamma check test function
    fractions: Optional[tuple] = None   # inequality suite delta fractions
    samples: int = 100
    paths: tuple = ()                  # sweep: per-path overrides of the fields above

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; choose from {KINDS}")
        if self.path is not None and self.path not in PATHS:
            raise ConfigError(f"unknown path {self.path!r}; choose from {PATHS}")
        if self.reference not in REFERENCES:
            raise ConfigError(f"unknown reference {self.reference!r}; choose from {REFERENCES}")
        for key in ("deltas", "sigmas", "fractions"):
            object.__setattr__(self, key, _tuple(getattr(self, key)))
        object.__setattr__(self, "ns", _tuple(self.ns, int))
        if self.deltas is not None and self.sigmas is not None:
            raise ConfigError("give deltas or sigmas, not both")
        if self.function is not None:
            try:
                parse_expression(self.function)
            except ExpressionError as exc:
                raise ConfigError(f"function {self.function!r}: {exc}") from None
        entries = []
        for i, entry in enumerate(self.paths):
            if not isinstance(entry, ExperimentConfig):
                if isinstance(entry, dict) and ("kind" in entry or "paths" in entry):
                    raise ConfigError(f"paths[{i}]: kind and paths cannot be overridden")
                entry = _build(ExperimentConfig, {**self._base(), **(entry or {}), "kind": "path"},
                               f"experiment.paths[{i}]")
            entries.append(entry)
        object.__setattr__(self, "paths", tuple(entries))
        if self.kind == "sweep" and not self.paths:
            raise ConfigError("a sweep needs a non-empty paths list")

    def _base(self):
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("kind", "paths")}
        for key in ("deltas", "sigmas", "ns", "fractions"):
            if out[key] is not None:
                out[key] = list(out[key])
        return out

    def to_dict(self):
        return {"kind": self.kind, **self._base(), "paths": [p._base() for p in self.paths]}


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    discretization: DiscretizationConfig = field(default_factory=DiscretizationConfig)
    load: LoadConfig = field(default_factory=LoadConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    output: str = "results"
    seed: int = 0

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        sections = {"problem": ProblemConfig, "discretization": DiscretizationConfig,
                    "load": LoadConfig, "solver": SolverConfig, "experiment": ExperimentConfig}
        allowed = set(sections) | {"output", "seed"}
        unknown = sorted(set(data) - allowed)
        if unknown:
            raise ConfigError(f"unknown top-level key(s) {unknown}; allowed {sorted(allowed)}")
        kw = {k: _build(c, data.get(k, {}), k) for k, c in sections.items()}
        output = data.get("output", "results")
        if not isinstance(output, str):
            raise ConfigError("output must be a directory path string")
        seed = data.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int):
            raise ConfigError("seed must be an integer")
        cfg = cls(output=output, seed=seed, **kw)
        cfg.validate()
        return cfg

    def to_dict(self):
        prob = asdict(self.problem)
        prob["domain"] = [list(s) for s in self.problem.domain]
        load = asdict(self.load)
        if load["f1"] is not None:
            load["f1"] = list(load["f1"])
        return {"problem": prob, "discretization": asdict(self.discretization), "load": load,
                "solver": self.solver.to_dict(), "experiment": self.experiment.to_dict(),
                "output": self.output, "seed": self.seed}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    # -- cross-section rules ---------------------------------------------------

    def validate(self):
        pr, ex = self.problem, self.experiment
        cap = family_delta0(pr.family, pr.domain_obj)
        if pr.delta is not None:
            check_delta(pr.family, pr.delta, cap)
        if ex.kind in ("path", "sweep", "gamma", "inequality"):
            if not pr.unit_box:
                raise ConfigError(f"{ex.kind} experiments run on the unit box; drop the domain key")
        if ex.kind in ("path", "sweep"):
            for entry in (ex.paths if ex.kind == "sweep" else (ex,)):
                self._validate_path(entry, cap)
        if ex.kind == "solve" and pr.family.startswith("const") and pr.delta is None and pr.sigma is None:
            raise ConfigError("const-dirichlet needs a delta or sigma")
        if ex.kind == "gamma":
            if not (pr.family.startswith("het") or pr.family.startswith("const")):
                raise ConfigError("the gamma check needs a nonlocal family")
            if ex.function is None or not ex.deltas:
                raise ConfigError("the gamma check needs a function and deltas")
            for dl in ex.deltas:
                check_delta(pr.family, dl, cap)
        if ex.kind == "inequality" and pr.d != 1:
            raise ConfigError("the inequality suite runs in one dimension")
        if self.load.f1 is not None and len(self.load.f1) != pr.d:
            raise ConfigError("f1 needs one expression per dimension")
        if self.load.case is not None and CASES[self.load.case].d != pr.d:
            raise ConfigError("manufactured case dimension does not match problem.d")

    def _validate_path(self, entry, cap):
        if entry.path is None or entry.ns is None:
            raise ConfigError("path experiments need path and ns")
        if entry.deltas is None and entry.sigmas is None:
            raise ConfigError("path experiments need deltas or sigmas")
        if self.load.case is None:
            raise ConfigError("path experiments need a manufactured case as load")
        for dl in path_deltas(entry, cap):
            check_delta(self.problem.family, dl, cap)


def check_delta(family, delta, cap):
    if family.startswith("het") and not 0 < delta < cap:
        raise ConfigError(f"(A_delta) violated: delta={delta!r} must lie in (0, delta0={cap!r})")
    if family.startswith("const") and not 0 < delta <= cap:
        raise ConfigError(f"(A_delta) violated: constant horizon {delta!r} must lie in (0, {cap!r}]")


def path_deltas(entry, cap):
    """Deltas of a path entry; sigmas map through ``min(delta0, 1/sigma)``."""
    if entry.deltas is not None:
        return entry.deltas
    if any(not s > 0 for s in entry.sigmas):
        raise ConfigError("sigmas must be positive")
    return tuple(min(cap, 1.0 / s) if math.isfinite(cap) else 1.0 / s for s in entry.sigmas)


def load_config(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return RunConfig.from_dict(data)
