"""Experiment configuration: a sectioned TOML file, or the JSON manifest a
previous run wrote.  See ``docs/config.md`` for the schema.
"""

import dataclasses
import json
import logging
import os
import re
import sys
import typing as t
from dataclasses import dataclass, field

from .cate import MIN_BOOTSTRAP, BootstrapScheme
from .core import Rho, as_rho
from .cw import MIN_CMC_LEVELS, MIN_CMC_SAMPLES, CRule, misspecify_rho
from .datagen import NoiseSpec
from .exceptions import ConfigurationError, CrossworldError
from .learners import LearnerParams

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

METHODS: tuple[str, ...] = ("cw", "cw+ci", "naive", "sqrt-naive", "cmc")
DEFAULT_RHO_RULES: dict[str, str] = {
    "cw": "true",
    "cw+ci": "true",
    "naive": "fixed(-1)",
    "sqrt-naive": "fixed(0)",
    "cmc": "fixed(0)",
}

_RULE = re.compile(r"^\s*(true|misspecified|fixed)\s*(?:\(\s*([^)]*)\s*\))?\s*$")


@dataclass(frozen=True)
class RhoRule:
    """How a method picks the ``rho`` it is run with: the true value of the
    grid cell, the true value shifted down by ``value`` (capped at -1), or a
    fixed ``value``.
    """

    kind: t.Literal["true", "misspecified", "fixed"] = "true"
    value: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("true", "misspecified", "fixed"):
            raise ConfigurationError(f"unknown rho rule {self.kind!r}")
        if self.kind == "fixed":
            try:
                as_rho(self.value)
            except CrossworldError as e:
                raise ConfigurationError(str(e)) from None

    @classmethod
    def parse(cls, raw: t.Union[str, float, int]) -> "RhoRule":
        """``"true"``, ``"misspecified(0.25)"``, ``"fixed(-1)"`` or a number."""
        if isinstance(raw, (int, float)) and not isinstance(raw, bool):
            return cls("fixed", float(raw))
        if not isinstance(raw, str):
            raise ConfigurationError(f"cannot read a rho rule from {raw!r}")
        match = _RULE.match(raw)
        if match is None:
            raise ConfigurationError(
                f"cannot read a rho rule from {raw!r}; expected true, "
                "misspecified(delta) or fixed(value)"
            )
        kind, arg = match.group(1), match.group(2)
        if kind == "true":
            if arg:
                raise ConfigurationError(f"'true' takes no argument, got {raw!r}")
            return cls("true")
        if not arg:
            raise ConfigurationError(f"{kind} needs an argument, e.g. {kind}(0.25)")
        try:
            value = float(arg)
        except ValueError:
            raise ConfigurationError(f"not a number: {arg!r}") from None
        return cls(kind, value)  # type: ignore[arg-type]

    def resolve(self, rho_true: t.Union[Rho, float]) -> Rho:
        if self.kind == "true":
            return as_rho(rho_true)
        if self.kind == "misspecified":
            return misspecify_rho(rho_true, self.value)
        return Rho(self.value)

    def __str__(self) -> str:
        if self.kind == "true":
            return "true"
        return f"{self.kind}({self.value:g})"


@dataclass(frozen=True)
class MethodSpec:
    """A named method column of the results.  ``method`` is one of
    :data:`METHODS`; several specs may share it, e.g. CW with the true and
    with a misspecified ``rho``.
    """

    name: str
    method: str
    rho_used: RhoRule = RhoRule()
    c: t.Union[float, t.Literal["auto"]] = "auto"
    c_rule: CRule = "quadratic"

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ConfigurationError(
                f"unknown method {self.method!r}; expected one of {', '.join(METHODS)}"
            )
        if self.c != "auto" and not 0.0 <= float(self.c) <= 1.0:
            raise ConfigurationError(f"c must lie in [0, 1] or be 'auto', got {self.c}")
        if self.c_rule not in ("quadratic", "linear"):
            raise ConfigurationError(f"unknown c_rule {self.c_rule!r}")

    @classmethod
    def default(cls, method: str) -> "MethodSpec":
        return cls(method, method, RhoRule.parse(DEFAULT_RHO_RULES.get(method, "true")))


@dataclass(frozen=True)
class BootstrapSettings:
    B: int = 200
    beta: float = 0.1
    # "leaf" resamples the leaf means of the fitted forests, "refit" regrows
    # the mean models on every resample
    scheme: BootstrapScheme = "leaf"
    # trees of refitted forests; None keeps the learner's count
    trees: int | None = None
    stratify: bool = True

    def __post_init__(self) -> None:
        if self.B < MIN_BOOTSTRAP:
            raise ConfigurationError(
                f"must be at least {MIN_BOOTSTRAP}, got {self.B}", "B"
            )
        if not 0.0 < self.beta < 1.0:
            raise ConfigurationError(f"must lie in (0, 1), got {self.beta}", "beta")
        if self.scheme not in ("leaf", "refit"):
            raise ConfigurationError(f"unknown scheme {self.scheme!r}", "scheme")
        if self.trees is not None and self.trees < 1:
            raise ConfigurationError(f"must be at least 1, got {self.trees}", "trees")


@dataclass(frozen=True)
class CmcSettings:
    M: int = MIN_CMC_SAMPLES
    levels: int = 199

    def __post_init__(self) -> None:
        if self.M < MIN_CMC_SAMPLES:
            raise ConfigurationError(
                f"must be at least {MIN_CMC_SAMPLES}, got {self.M}", "M"
            )
        if self.levels < MIN_CMC_LEVELS:
            raise ConfigurationError(
                f"must be at least {MIN_CMC_LEVELS}, got {self.levels}", "levels"
            )

    def level_grid(self) -> tuple[float, ...]:
        """Equally spaced levels strictly inside ``(0, 1)``."""
        step = 1.0 / self.levels
        return tuple(step * (i + 0.5) for i in range(self.levels))


@dataclass(frozen=True)
class GridSettings:
    rho: tuple[float, ...] = (-1.0, -0.5, 0.0, 0.5, 1.0)
    d: tuple[int, ...] = (1,)
    n: tuple[int, ...] = (2000,)
    noise: tuple[str, ...] = ("gaussian/gaussian",)
    sigma0: float = 1.0
    sigma1: float = 2.0
    copula_df: float = 4.0

    def __post_init__(self) -> None:
        for key in ("rho", "d", "n", "noise"):
            if not getattr(self, key):
                raise ConfigurationError("must not be empty", key)
        for r in self.rho:
            try:
                as_rho(r)
            except CrossworldError as e:
                raise ConfigurationError(str(e), "rho") from None
        if any(d < 1 for d in self.d):
            raise ConfigurationError("dimensions must be at least 1", "d")
        if any(n < 4 for n in self.n):
            raise ConfigurationError("sample sizes must be at least 4", "n")
        for label in self.noise:
            self.noise_spec(label, 0.0)

    def noise_spec(self, label: str, rho: t.Union[Rho, float]) -> NoiseSpec:
        try:
            return NoiseSpec.parse(
                label,
                rho,
                sigma0=self.sigma0,
                sigma1=self.sigma1,
                copula_df=self.copula_df,
            )
        except ConfigurationError as e:
            raise ConfigurationError(str(e), "noise") from None


@dataclass(frozen=True)
class OutputSettings:
    results: str = "results.csv"
    summary: str | None = None
    manifest: str | None = None
    record_runtime: bool = False

    @property
    def summary_path(self) -> str:
        return self.summary or _sibling(self.results, ".summary.csv")

    @property
    def manifest_path(self) -> str:
        return self.manifest or _sibling(self.results, ".manifest.json")


def _sibling(path: str, suffix: str) -> str:
    stem, _ = os.path.splitext(path)
    return stem + suffix


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a replication study needs; frozen and validated on
    construction.  ``source`` is ``"synthetic"`` or the path of a CSV
    dataset whose rows are split into training and test parts.
    """

    alpha: float = 0.1
    replications: int = 20
    seed: int = 0
    threads: int | None = None
    n_test: int = 1000
    split_ratio: float = 0.5
    source: str = "synthetic"
    semi_synthetic: bool = False
    grid: GridSettings = field(default_factory=GridSettings)
    learner: LearnerParams = field(default_factory=LearnerParams)
    bootstrap: BootstrapSettings = field(default_factory=BootstrapSettings)
    cmc: CmcSettings = field(default_factory=CmcSettings)
    methods: tuple[MethodSpec, ...] = tuple(MethodSpec.default(m) for m in METHODS)
    output: OutputSettings = field(default_factory=OutputSettings)

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ConfigurationError(
                f"must lie in (0, 1), got {self.alpha}", "experiment.alpha"
            )
        if self.replications < 1:
            raise ConfigurationError("must be at least 1", "experiment.replications")
        if self.threads is not None and self.threads < 1:
            raise ConfigurationError("must be at least 1", "experiment.threads")
        if self.n_test < 1:
            raise ConfigurationError("must be at least 1", "experiment.n_test")
        if not 0.0 < self.split_ratio < 1.0:
            raise ConfigurationError("must lie in (0, 1)", "experiment.split_ratio")
        if not self.methods:
            raise ConfigurationError("at least one method is required", "methods")
        names = [m.name for m in self.methods]
        if len(set(names)) != len(names):
            raise ConfigurationError("method names must be unique", "methods")

    @property
    def is_synthetic(self) -> bool:
        return self.source == "synthetic"

    def replace(self, **changes: t.Any) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, t.Any]:
        """The configuration in the shape :meth:`from_dict` reads."""
        learner = {
            k: v
            for k, v in dataclasses.asdict(self.learner).items()
            if k != "seed" and v is not None
        }
        output = {
            k: v for k, v in dataclasses.asdict(self.output).items() if v is not None
        }
        experiment: dict[str, t.Any] = {
            "alpha": self.alpha,
            "replications": self.replications,
            "seed": self.seed,
            "n_test": self.n_test,
            "split_ratio": self.split_ratio,
            "source": self.source,
            "semi_synthetic": self.semi_synthetic,
        }
        if self.threads is not None:
            experiment["threads"] = self.threads
        return {
            "experiment": experiment,
            "grid": {
                k: list(v) if isinstance(v, tuple) else v
                for k, v in dataclasses.asdict(self.grid).items()
            },
            "learner": learner,
            "bootstrap": {
                k: v
                for k, v in dataclasses.asdict(self.bootstrap).items()
                if v is not None
            },
            "cmc": dataclasses.asdict(self.cmc),
            "methods": {
                m.name: {
                    "method": m.method,
                    "rho_used": str(m.rho_used),
                    "c": m.c,
                    "c_rule": m.c_rule,
                }
                for m in self.methods
            },
            "output": output,
        }

    @classmethod
    def from_dict(cls, raw: t.Mapping[str, t.Any]) -> "ExperimentConfig":
        root = _Section(raw, "")
        with root.section("experiment") as s:
            experiment = dict(
                alpha=s.number("alpha", 0.1),
                replications=s.integer("replications", 20),
                seed=s.integer("seed", 0),
                threads=s.integer("threads", None),
                n_test=s.integer("n_test", 1000),
                split_ratio=s.number("split_ratio", 0.5),
                source=s.string("source", "synthetic"),
                semi_synthetic=s.boolean("semi_synthetic", False),
            )
        with root.section("grid") as s:
            grid = s.build(
                GridSettings,
                rho=tuple(s.numbers("rho", GridSettings.rho)),
                d=tuple(s.integers("d", GridSettings.d)),
                n=tuple(s.integers("n", GridSettings.n)),
                noise=tuple(s.strings("noise", GridSettings.noise)),
                sigma0=s.number("sigma0", 1.0),
                sigma1=s.number("sigma1", 2.0),
                copula_df=s.number("copula_df", 4.0),
            )
        with root.section("learner") as s:
            learner = s.build(
                LearnerParams,
                kind=s.string("kind", "forest"),
                trees=s.integer("trees", 500),
                min_leaf=s.integer("min_leaf", 10),
                mtry=s.integer("mtry", None),
                max_depth=s.integer("max_depth", None),
                subsample=s.number("subsample", 1.0),
                n_jobs=s.integer("n_jobs", None),
            )
        with root.section("bootstrap") as s:
            bootstrap = s.build(
                BootstrapSettings,
                B=s.integer("B", 200),
                beta=s.number("beta", 0.1),
                scheme=s.string("scheme", "leaf"),
                trees=s.integer("trees", None),
                stratify=s.boolean("stratify", True),
            )
        with root.section("cmc") as s:
            cmc = s.build(
                CmcSettings,
                M=s.integer("M", MIN_CMC_SAMPLES),
                levels=s.integer("levels", 199),
            )
        methods = _read_methods(root)
        with root.section("output") as s:
            output = OutputSettings(
                results=s.string("results", "results.csv"),
                summary=s.string("summary", None),
                manifest=s.string("manifest", None),
                record_runtime=s.boolean("record_runtime", False),
            )
        root.finish()
        return cls(
            **experiment,
            grid=grid,
            learner=learner,
            bootstrap=bootstrap,
            cmc=cmc,
            methods=methods,
            output=output,
        )


def _read_methods(root: "_Section") -> tuple[MethodSpec, ...]:
    raw = root.take("methods")
    if raw is None:
        return tuple(MethodSpec.default(m) for m in METHODS)
    if isinstance(raw, list):
        specs = []
        for i, name in enumerate(raw):
            if not isinstance(name, str):
                raise ConfigurationError("expected a method name", f"methods[{i}]")
            try:
                specs.append(MethodSpec.default(name))
            except ConfigurationError as e:
                raise ConfigurationError(str(e), f"methods.{name}") from None
        return tuple(specs)
    if not isinstance(raw, t.Mapping):
        raise ConfigurationError(
            "expected a table or a list of method names", "methods"
        )
    specs = []
    for name, options in raw.items():
        s = _Section(options, f"methods.{name}")
        method = s.string("method", name)
        rule = s.take("rho_used")
        c = s.take("c", "auto")
        if c != "auto" and not isinstance(c, (int, float)):
            raise ConfigurationError("expected a number or 'auto'", f"methods.{name}.c")
        fields = dict(
            c=c if c == "auto" else float(c),
            c_rule=s.string("c_rule", "quadratic"),
        )
        try:
            if rule is None:
                rule = DEFAULT_RHO_RULES.get(method, "true")
            rho_used = RhoRule.parse(rule)
        except ConfigurationError as e:
            raise ConfigurationError(str(e), f"methods.{name}.rho_used") from None
        spec = s.build(
            MethodSpec, name=name, method=method, rho_used=rho_used, **fields
        )
        s.finish()
        specs.append(spec)
    return tuple(specs)


_Missing = object()
T = t.TypeVar("T")
_Check = t.Callable[[t.Any], bool]
_MANIFEST_KEYS = {"config", "crossworld_version"}


class _Section:
    """Reads one table of the configuration, tracking consumed keys so the
    leftovers can be reported with their dotted path.
    """

    def __init__(self, raw: t.Any, path: str) -> None:
        if raw is None:
            raw = {}
        if not isinstance(raw, t.Mapping):
            raise ConfigurationError("expected a table", path or "<root>")
        self.raw = raw
        self.path = path
        self.seen: set[str] = set()

    def key(self, name: str) -> str:
        return f"{self.path}.{name}" if self.path else name

    def take(self, name: str, default: t.Any = None) -> t.Any:
        self.seen.add(name)
        return self.raw.get(name, default)

    def section(self, name: str) -> "_Section":
        return _Section(self.take(name), self.key(name))

    def __enter__(self) -> "_Section":
        return self

    def __exit__(self, exc_type: t.Any, *rest: object) -> None:
        if exc_type is None:
            self.finish()

    def finish(self) -> None:
        unknown = sorted(set(self.raw) - self.seen)
        if unknown:
            raise ConfigurationError("unknown key", self.key(unknown[0]))

    def _typed(self, name: str, default: t.Any, check: _Check, what: str) -> t.Any:
        value = self.take(name, _Missing)
        if value is _Missing or value is None:
            return default
        if not check(value):
            raise ConfigurationError(f"expected {what}, got {value!r}", self.key(name))
        return value

    def number(self, name: str, default: t.Any) -> t.Any:
        value = self._typed(name, default, _is_number, "a number")
        return value if value is None else float(value)

    def integer(self, name: str, default: t.Any) -> t.Any:
        return self._typed(name, default, _is_integer, "an integer")

    def boolean(self, name: str, default: bool) -> bool:
        return self._typed(
            name, default, lambda v: isinstance(v, bool), "true or false"
        )

    def string(self, name: str, default: t.Any) -> t.Any:
        return self._typed(name, default, lambda v: isinstance(v, str), "a string")

    def _list(
        self, name: str, default: t.Sequence[T], check: _Check, what: str
    ) -> list[t.Any]:
        value = self.take(name, _Missing)
        if value is _Missing:
            return list(default)
        if not isinstance(value, list):
            value = [value]
        for i, item in enumerate(value):
            if not check(item):
                raise ConfigurationError(
                    f"expected {what}, got {item!r}", f"{self.key(name)}[{i}]"
                )
        return value

    def numbers(self, name: str, default: t.Sequence[float]) -> list[float]:
        return [float(v) for v in self._list(name, default, _is_number, "a number")]

    def integers(self, name: str, default: t.Sequence[int]) -> list[int]:
        return self._list(name, default, _is_integer, "an integer")

    def strings(self, name: str, default: t.Sequence[str]) -> list[str]:
        return self._list(name, default, lambda v: isinstance(v, str), "a string")

    def build(self, cls: t.Callable[..., T], **kwargs: t.Any) -> T:
        """Construct ``cls``, prefixing validation errors with this section."""
        try:
            return cls(**kwargs)
        except ConfigurationError as e:
            if e.key:
                message = str(e).split(": ", 1)[-1]
                raise ConfigurationError(message, self.key(e.key)) from None
            raise ConfigurationError(str(e), self.path) from None
        except CrossworldError as e:
            raise ConfigurationError(str(e), self.path) from None


def _is_number(value: t.Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _is_integer(value: t.Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def load_config(path: t.Union[str, "os.PathLike[str]"]) -> ExperimentConfig:
    """Read a TOML experiment file, or the JSON manifest of an earlier run
    (whose ``config`` entry is used).
    """
    path = os.fspath(path)
    try:
        with open(path, "rb") as f:
            if path.endswith(".json"):
                raw = json.load(f)
                if isinstance(raw, dict) and _MANIFEST_KEYS <= set(raw):
                    raw = raw["config"]
            else:
                raw = tomllib.load(f)
    except OSError as e:
        raise ConfigurationError(
            f"cannot read configuration {path!r}: {e.strerror}"
        ) from e
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"cannot parse {path!r}: {e}") from e
    config = ExperimentConfig.from_dict(raw)
    logger.info(
        "loaded %s: %d methods, %d replications",
        path,
        len(config.methods),
        config.replications,
    )
    return config
