import dataclasses
import logging
import math
import os
import re
import typing as t
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt
import pandas as pd
import statsmodels.api as sm
from scipy import integrate, optimize, stats

from .conformal import SplitPlan
from .core import FloatArray, Rho, as_rho
from .exceptions import ConfigurationError, DiagnosticError, DomainError, InputError
from .seeding import SeedLike, as_generator, as_seed_sequence

logger = logging.getLogger(__name__)

Marginal = t.Literal["gaussian", "laplace", "student_t3"]
Copula = t.Literal["gaussian", "frank", "student_t"]
MARGINALS: tuple[str, ...] = ("gaussian", "laplace", "student_t3")
COPULAS: tuple[str, ...] = ("gaussian", "frank", "student_t")

# target standard deviation of the random CATE surface
TAU_SCALE = 2.0
# covariance between latent covariates when d > 1
COVARIATE_CORRELATION = 0.25
_TAU_MC_SAMPLES = 20_000
_UNIT_CLIP = 1e-16
# probabilities of the coefficients 0..4 in the semi-synthetic response
_SEMI_BETA_WEIGHTS = (0.5, 0.2, 0.15, 0.1, 0.05)


@dataclass(frozen=True)
class Dataset:
    """Covariates ``X``, binary treatment ``T`` and observed outcome ``Y``.

    Generated datasets also carry both potential outcomes ``Y0``/``Y1`` and
    the true CATE ``tau`` so intervals can be scored against real ITEs.
    """

    X: FloatArray
    T: npt.NDArray[np.int_]
    Y: FloatArray
    Y0: FloatArray | None = None
    Y1: FloatArray | None = None
    tau: FloatArray | None = None
    propensity: FloatArray | None = None
    meta: dict[str, t.Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2:
            raise InputError(f"X must be a matrix, got {X.ndim} dimensions")
        n = X.shape[0]
        T_raw = np.asarray(self.T)
        if T_raw.shape != (n,):
            raise InputError(f"T has shape {T_raw.shape}, expected ({n},)")
        if not np.isin(T_raw, (0, 1)).all():
            raise InputError("T must contain only 0 and 1")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "T", T_raw.astype(np.int_))
        for name in ("Y", "Y0", "Y1", "tau", "propensity"):
            value = getattr(self, name)
            if value is None:
                continue
            arr = np.asarray(value, dtype=np.float64)
            if arr.shape != (n,):
                raise InputError(f"{name} has shape {arr.shape}, expected ({n},)")
            object.__setattr__(self, name, arr)
        if not np.isfinite(X).all() or not np.isfinite(self.Y).all():
            raise InputError("dataset contains non-finite values")
        if (self.Y0 is None) != (self.Y1 is None):
            raise InputError("Y0 and Y1 must be given together")
        if self.Y0 is not None and self.Y1 is not None:
            expected = np.where(self.T == 1, self.Y1, self.Y0)
            if not np.allclose(self.Y, expected, rtol=1e-12, atol=1e-9):
                bad = int(np.flatnonzero(~np.isclose(self.Y, expected))[0])
                raise InputError(f"row {bad}: Y is not T*Y1 + (1-T)*Y0")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def has_counterfactuals(self) -> bool:
        return self.Y0 is not None and self.Y1 is not None

    @property
    def ite(self) -> FloatArray:
        if self.Y0 is None or self.Y1 is None:
            raise InputError("dataset has no counterfactual outcomes")
        return self.Y1 - self.Y0

    def arm_counts(self) -> tuple[int, int]:
        treated = int(self.T.sum())
        return self.n - treated, treated

    def subset(self, rows: npt.ArrayLike) -> "Dataset":
        idx = np.asarray(rows, dtype=np.intp)

        def take(arr: FloatArray | None) -> FloatArray | None:
            return None if arr is None else arr[idx]

        return Dataset(
            X=self.X[idx],
            T=self.T[idx],
            Y=self.Y[idx],
            Y0=take(self.Y0),
            Y1=take(self.Y1),
            tau=take(self.tau),
            propensity=take(self.propensity),
            meta=dict(self.meta),
        )


@dataclass(frozen=True)
class NoiseSpec:
    """Joint law of the noise pair ``(eps0, eps1)``: a copula family with
    dependence ``rho`` and unit-variance marginals scaled by ``sigma0`` and
    ``sigma1``.  ``copula_df`` sets the degrees of freedom of the t-copula.
    """

    marginal: Marginal = "gaussian"
    copula: Copula = "gaussian"
    rho: Rho = Rho(0.0)
    sigma0: float = 1.0
    sigma1: float = 2.0
    copula_df: float = 4.0

    def __post_init__(self) -> None:
        if self.marginal not in MARGINALS:
            raise ConfigurationError(
                f"unknown marginal {self.marginal!r}; expected one of {MARGINALS}"
            )
        if self.copula not in COPULAS:
            raise ConfigurationError(
                f"unknown copula {self.copula!r}; expected one of {COPULAS}"
            )
        if not (self.sigma0 > 0 and self.sigma1 > 0):
            raise ConfigurationError(
                f"noise scales must be positive, got {self.sigma0}, {self.sigma1}"
            )
        if self.copula_df <= 0:
            raise ConfigurationError(
                f"copula_df must be positive, got {self.copula_df}"
            )
        object.__setattr__(self, "rho", as_rho(self.rho))

    @classmethod
    def parse(
        cls, label: str, rho: t.Union[Rho, float] = 0.0, **kwargs: t.Any
    ) -> "NoiseSpec":
        """Build from a ``"marginal/copula"`` label such as ``"laplace/frank"``."""
        marginal, _, copula = label.partition("/")
        return cls(
            marginal=marginal,  # type: ignore[arg-type]
            copula=copula or "gaussian",  # type: ignore[arg-type]
            rho=rho,  # type: ignore[arg-type]
            **kwargs,
        )

    @property
    def label(self) -> str:
        return f"{self.marginal}/{self.copula}"

    def with_rho(self, rho: t.Union[Rho, float]) -> "NoiseSpec":
        return dataclasses.replace(self, rho=as_rho(rho))


def _debye(k: int, theta: float) -> float:
    def integrand(s: float) -> float:
        return s**k / math.expm1(s) if s != 0.0 else (1.0 if k == 1 else 0.0)

    value, _ = integrate.quad(integrand, 0.0, theta)
    return k * value / theta**k


def frank_kendall_tau(theta: float) -> float:
    """Kendall's tau of the Frank copula, ``1 - 4 (1 - D1(theta)) / theta``."""
    if theta == 0.0:
        return 0.0
    return 1.0 - 4.0 * (1.0 - _debye(1, theta)) / theta


def frank_spearman_rho(theta: float) -> float:
    """Spearman's rho of the Frank copula, ``1 - 12 (D1 - D2) / theta``."""
    if theta == 0.0:
        return 0.0
    return 1.0 - 12.0 * (_debye(1, theta) - _debye(2, theta)) / theta


def frank_theta_for_rho(rho: t.Union[Rho, float]) -> float:
    """The Frank parameter whose Kendall's tau equals that of a Gaussian
    copula with correlation ``rho``, i.e. ``(2 / pi) * arcsin(rho)``.
    """
    r = as_rho(rho).value
    if abs(r) == 1.0:
        raise ConfigurationError("the Frank copula cannot reach rho = +/-1")
    if r == 0.0:
        return 0.0
    target = abs(2.0 / math.pi * math.asin(r))
    upper = 1.0
    while frank_kendall_tau(upper) < target:
        upper *= 2.0
    theta = optimize.bisect(
        lambda th: frank_kendall_tau(th) - target, 1e-9, upper, xtol=1e-10
    )
    logger.debug("frank theta %.6g for rho %.4g", theta, r)
    return math.copysign(theta, r)


def _frank_uniforms(
    rng: np.random.Generator, n: int, theta: float
) -> tuple[FloatArray, FloatArray]:
    u0 = rng.random(n)
    w = rng.random(n)
    if theta == 0.0:
        return u0, w
    # conditional inverse of the Frank copula given u0
    ratio = w * math.expm1(-theta) / (w + (1.0 - w) * np.exp(-theta * u0))
    u1 = -np.log1p(ratio) / theta
    return u0, np.clip(u1, 0.0, 1.0)


def _marginal_ppf(marginal: str, u: FloatArray) -> FloatArray:
    u = np.clip(u, _UNIT_CLIP, 1.0 - _UNIT_CLIP)
    if marginal == "gaussian":
        return stats.norm.ppf(u)
    if marginal == "laplace":
        return stats.laplace.ppf(u, scale=1.0 / math.sqrt(2.0))
    return stats.t.ppf(u, df=3) / math.sqrt(3.0)


def gen_copula_noise(
    noise: NoiseSpec, n: int, seed: SeedLike = None
) -> tuple[FloatArray, FloatArray]:
    """Draw ``n`` noise pairs ``(eps0, eps1)`` following ``noise``.

    Marginals have unit variance before scaling.  ``|rho| = 1`` is realised
    as the comonotone (or antimonotone) coupling for every copula family.
    """
    rng = as_generator(seed)
    r = noise.rho.value
    if noise.copula == "gaussian" or noise.copula == "student_t":
        z = rng.standard_normal((n, 2))
        z0 = z[:, 0]
        z1 = r * z0 + math.sqrt(max(0.0, 1.0 - r * r)) * z[:, 1]
        if noise.copula == "gaussian" and noise.marginal == "gaussian":
            return noise.sigma0 * z0, noise.sigma1 * z1
        if noise.copula == "gaussian":
            u0, u1 = stats.norm.cdf(z0), stats.norm.cdf(z1)
        else:
            scale = np.sqrt(rng.chisquare(noise.copula_df, size=n) / noise.copula_df)
            u0 = stats.t.cdf(z0 / scale, df=noise.copula_df)
            u1 = stats.t.cdf(z1 / scale, df=noise.copula_df)
    elif abs(r) == 1.0:
        u0 = rng.random(n)
        u1 = u0 if r > 0 else 1.0 - u0
    else:
        u0, u1 = _frank_uniforms(rng, n, frank_theta_for_rho(r))

    if abs(r) == 1.0:
        u1 = u0 if r > 0 else 1.0 - u0
    return (
        noise.sigma0 * _marginal_ppf(noise.marginal, u0),
        noise.sigma1 * _marginal_ppf(noise.marginal, u1),
    )


def _monomials(d: int) -> npt.NDArray[np.int_]:
    if d == 1:
        return np.array([[i, 0] for i in range(4)])
    return np.array([[i, j] for i in range(4) for j in range(4 - i)])


def sample_covariates(n: int, d: int, seed: SeedLike = None) -> FloatArray:
    """``Unif(-1, 1)`` for ``d = 1``; otherwise the normal CDF of a
    multivariate normal with unit variances and covariance 0.25.
    """
    if d < 1:
        raise ConfigurationError(f"d must be at least 1, got {d}")
    rng = as_generator(seed)
    if d == 1:
        return rng.uniform(-1.0, 1.0, size=(n, 1))
    cov = np.full((d, d), COVARIATE_CORRELATION)
    np.fill_diagonal(cov, 1.0)
    latent = rng.standard_normal((n, d)) @ np.linalg.cholesky(cov).T
    return stats.norm.cdf(latent)


def propensity(X: FloatArray) -> FloatArray:
    """``(1 + |x1|) / 4``, always within ``[0.25, 0.5]``."""
    return (1.0 + np.abs(X[:, 0])) / 4.0


@dataclass(frozen=True)
class SyntheticDesign:
    """The fixed parts of a synthetic DGP: a linear baseline ``beta . x`` and
    a random polynomial CATE of total degree at most 3 in ``(x1, x2)``.
    """

    d: int
    beta: FloatArray
    exponents: npt.NDArray[np.int_]
    coefficients: FloatArray

    def f0(self, X: FloatArray) -> FloatArray:
        return X @ self.beta

    def tau(self, X: FloatArray) -> FloatArray:
        x1 = X[:, 0]
        x2 = X[:, 1] if X.shape[1] > 1 else np.zeros(len(X))
        powers = self.exponents
        terms = x1[:, None] ** powers[:, 0] * x2[:, None] ** powers[:, 1]
        return terms @ self.coefficients

    def to_meta(self) -> dict[str, t.Any]:
        return {
            "d": self.d,
            "beta": self.beta.tolist(),
            "tau_exponents": self.exponents.tolist(),
            "tau_coefficients": self.coefficients.tolist(),
        }


def make_design(d: int, seed: SeedLike = None) -> SyntheticDesign:
    """Draw ``beta`` and the CATE polynomial from standard normals, then
    rescale the polynomial so its standard deviation over the covariate
    distribution is ``TAU_SCALE``.
    """
    rng = as_generator(seed)
    beta = rng.standard_normal(d)
    exponents = _monomials(d)
    coefficients = rng.standard_normal(len(exponents))
    design = SyntheticDesign(d, beta, exponents, coefficients)
    spread = float(np.std(design.tau(sample_covariates(_TAU_MC_SAMPLES, d, rng))))
    if spread > 0:
        coefficients = coefficients * (TAU_SCALE / spread)
    return SyntheticDesign(d, beta, exponents, coefficients)


def _assemble(
    X: FloatArray,
    T: npt.NDArray[np.int_],
    Y0: FloatArray,
    Y1: FloatArray,
    tau: FloatArray,
    pi: FloatArray | None,
    meta: dict[str, t.Any],
) -> Dataset:
    return Dataset(
        X=X,
        T=T,
        Y=np.where(T == 1, Y1, Y0),
        Y0=Y0,
        Y1=Y1,
        tau=tau,
        propensity=pi,
        meta=meta,
    )


def gen_synthetic(
    n: int,
    d: int,
    rho: t.Union[Rho, float],
    noise: NoiseSpec | None = None,
    seed: SeedLike = None,
    design: SyntheticDesign | None = None,
    equal_variance: bool = False,
) -> Dataset:
    """Synthetic data with known potential outcomes.

    ``Y(0) = beta . X + eps0`` and ``Y(1) = beta . X + tau(X) + eps1`` with
    treatment drawn from the propensity ``(1 + |X1|) / 4``.  By default the
    noise is Gaussian with covariance ``[[1, 2 rho], [2 rho, 4]]``, i.e.
    correlation ``rho``.  ``equal_variance`` sets ``sigma1 = sigma0``.

    Pass the same ``design`` to draw further samples (e.g. a test set) from
    the same DGP.
    """
    if n < 1:
        raise ConfigurationError(f"n must be at least 1, got {n}")
    if d < 1:
        raise ConfigurationError(f"d must be at least 1, got {d}")
    noise = (noise or NoiseSpec()).with_rho(rho)
    if equal_variance:
        noise = dataclasses.replace(noise, sigma1=noise.sigma0)
    design_seq, sample_seq, noise_seq = as_seed_sequence(seed).spawn(3)
    if design is None:
        design = make_design(d, design_seq)
    elif design.d != d:
        raise ConfigurationError(f"design has dimension {design.d}, requested {d}")

    rng = as_generator(sample_seq)
    X = sample_covariates(n, d, rng)
    pi = propensity(X)
    T = (rng.random(n) < pi).astype(np.int_)
    eps0, eps1 = gen_copula_noise(noise, n, noise_seq)
    base = design.f0(X)
    tau = design.tau(X)
    meta = {
        "dgp": "synthetic",
        "n": n,
        "d": d,
        "rho": noise.rho.value,
        "noise": noise.label,
        "sigma0": noise.sigma0,
        "sigma1": noise.sigma1,
        "design": design.to_meta(),
    }
    return _assemble(X, T, base + eps0, base + tau + eps1, tau, pi, meta)


def gen_hidden_covariate(
    n: int,
    d: int,
    var_h: float,
    var_eps: float,
    seed: SeedLike = None,
    design: SyntheticDesign | None = None,
) -> Dataset:
    """Potential outcomes sharing a hidden component:
    ``Y(t) = mu_t(X) + H + eps_t`` with ``H ~ N(0, var_h)`` and independent
    ``eps_t ~ N(0, var_eps)``, so that ``rho = var_h / (var_h + var_eps)``.
    """
    if n < 1:
        raise ConfigurationError(f"n must be at least 1, got {n}")
    if d < 1:
        raise ConfigurationError(f"d must be at least 1, got {d}")
    rho = rho_from_variance_decomposition(var_h, var_eps)
    design_seq, sample_seq, noise_seq = as_seed_sequence(seed).spawn(3)
    design = design or make_design(d, design_seq)
    rng = as_generator(sample_seq)
    X = sample_covariates(n, d, rng)
    pi = propensity(X)
    T = (rng.random(n) < pi).astype(np.int_)
    noise_rng = as_generator(noise_seq)
    hidden = noise_rng.normal(0.0, math.sqrt(var_h), n)
    eps = noise_rng.normal(0.0, math.sqrt(var_eps), (n, 2))
    base = design.f0(X)
    tau = design.tau(X)
    meta = {
        "dgp": "hidden",
        "n": n,
        "d": d,
        "rho": rho.value,
        "var_h": var_h,
        "var_eps": var_eps,
        "design": design.to_meta(),
    }
    return _assemble(
        X, T, base + hidden + eps[:, 0], base + tau + hidden + eps[:, 1], tau, pi, meta
    )


def gen_semi_synthetic(
    X: npt.ArrayLike,
    T: npt.ArrayLike,
    rho: t.Union[Rho, float],
    seed: SeedLike = None,
    effect: float = 4.0,
) -> Dataset:
    """Re-simulate outcomes on real covariates and treatments with a linear
    response surface: ``Y(0) = beta . X + eps0``, ``Y(1) = beta . X + effect +
    eps1``, where ``beta`` takes values 0..4 with probabilities
    .5/.2/.15/.1/.05 and the noise is standard bivariate normal with
    correlation ``rho``.
    """
    X_arr = np.asarray(X, dtype=np.float64)
    T_arr = np.asarray(T, dtype=np.int_)
    rng = as_generator(seed)
    beta = rng.choice(5, size=X_arr.shape[1], p=_SEMI_BETA_WEIGHTS).astype(float)
    noise = NoiseSpec(rho=as_rho(rho), sigma0=1.0, sigma1=1.0)
    eps0, eps1 = gen_copula_noise(noise, len(T_arr), rng)
    base = X_arr @ beta
    tau = np.full(len(T_arr), effect)
    meta = {"dgp": "semi_synthetic", "rho": as_rho(rho).value, "beta": beta.tolist()}
    return _assemble(X_arr, T_arr, base + eps0, base + effect + eps1, tau, None, meta)


def split_dataset(
    data: Dataset,
    ratio: float = 0.5,
    seed: SeedLike = None,
    stratify_by_arm: bool = True,
) -> SplitPlan:
    """Split rows into a training fraction ``ratio`` and a calibration rest.

    With ``stratify_by_arm`` each arm is split separately so both parts keep
    the arm proportions.
    """
    if not 0.0 < ratio < 1.0:
        raise ConfigurationError(
            f"split ratio must lie in (0, 1), got {ratio}", "ratio"
        )
    rng = as_generator(seed)
    n_train = round(ratio * data.n)
    if not stratify_by_arm:
        order = rng.permutation(data.n)
        if not 0 < n_train < data.n:
            raise InputError(f"cannot split {data.n} rows at ratio {ratio}")
        train, calibration = order[:n_train], order[n_train:]
    else:
        arms = [np.flatnonzero(data.T == arm) for arm in (0, 1)]
        for arm, rows in enumerate(arms):
            if len(rows) < 2:
                raise InputError(f"arm {arm} has {len(rows)} units; need at least 2")
        n1 = min(max(round(ratio * len(arms[1])), 1), len(arms[1]) - 1)
        n0 = min(max(n_train - n1, 1), len(arms[0]) - 1)
        picks = [rng.permutation(rows) for rows in arms]
        train = np.concatenate([picks[0][:n0], picks[1][:n1]])
        calibration = np.concatenate([picks[0][n0:], picks[1][n1:]])

    def counts(rows: npt.NDArray[np.intp]) -> tuple[int, int]:
        treated = int(data.T[rows].sum())
        return len(rows) - treated, treated

    return SplitPlan(train, calibration, data.n, counts(train), counts(calibration))


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for :func:`load_csv`.  ``x_columns=None`` picks every
    column named ``x1``, ``x2``, ... in numeric order.
    """

    x_columns: tuple[str, ...] | None = None
    t: str = "t"
    y: str = "y"
    y0: str = "y0"
    y1: str = "y1"
    tau: str = "tau"


_X_COLUMN = re.compile(r"^x(\d+)$")


def load_csv(
    path: t.Union[str, "os.PathLike[str]"], schema: CsvSchema | None = None
) -> Dataset:
    """Read a dataset from a UTF-8 CSV file with a header row.

    Counterfactual columns are optional; when both are present oracle
    evaluation becomes possible.  Errors name the offending file row (the
    header is row 1).
    """
    schema = schema or CsvSchema()
    try:
        frame = pd.read_csv(path, encoding="utf-8", dtype=str, keep_default_na=False)
    except (OSError, UnicodeDecodeError, pd.errors.ParserError) as e:
        raise InputError(f"cannot read {os.fspath(path)!r}: {e}") from e

    if schema.x_columns is None:
        matched = [
            (int(m.group(1)), c) for c in frame.columns if (m := _X_COLUMN.match(c))
        ]
        x_columns = tuple(c for _, c in sorted(matched))
        if not x_columns:
            raise InputError("no covariate columns named x1, x2, ... found")
    else:
        x_columns = schema.x_columns
    required = [*x_columns, schema.t, schema.y]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise InputError(f"missing column(s): {', '.join(missing)}")
    optional = [c for c in (schema.y0, schema.y1, schema.tau) if c in frame.columns]

    numeric: dict[str, FloatArray] = {}
    for column in [*required, *optional]:
        text = frame[column].str.strip()
        values = pd.to_numeric(text, errors="coerce").to_numpy(float)
        bad = ~np.isfinite(values)
        if bad.any():
            row = int(np.flatnonzero(bad)[0]) + 2
            raw = frame[column].iloc[row - 2]
            raise InputError(
                f"row {row}: non-finite or unparseable value {raw!r} in column "
                f"{column}"
            )
        numeric[column] = values

    treatment = numeric[schema.t]
    non_binary = ~np.isin(treatment, (0.0, 1.0))
    if non_binary.any():
        row = int(np.flatnonzero(non_binary)[0]) + 2
        raise InputError(
            f"row {row}: treatment column {schema.t} must be 0 or 1, got "
            f"{treatment[row - 2]:g}"
        )

    has_pair = schema.y0 in numeric and schema.y1 in numeric
    return Dataset(
        X=np.column_stack([numeric[c] for c in x_columns]),
        T=treatment.astype(np.int_),
        Y=numeric[schema.y],
        Y0=numeric[schema.y0] if has_pair else None,
        Y1=numeric[schema.y1] if has_pair else None,
        tau=numeric.get(schema.tau),
        meta={"source": os.fspath(path)},
    )


def write_csv(data: Dataset, path: t.Union[str, "os.PathLike[str]"]) -> None:
    """Write ``data`` in the layout :func:`load_csv` reads, with full float
    precision so a reload is exact.
    """
    columns: dict[str, t.Any] = {f"x{j + 1}": data.X[:, j] for j in range(data.d)}
    columns["t"] = data.T
    columns["y"] = data.Y
    if data.Y0 is not None and data.Y1 is not None:
        columns["y0"] = data.Y0
        columns["y1"] = data.Y1
    if data.tau is not None:
        columns["tau"] = data.tau
    pd.DataFrame(columns).to_csv(
        path, index=False, float_format="%.17g", encoding="utf-8", lineterminator="\n"
    )


class ConditionalCorrelation(t.NamedTuple):
    estimate: float
    count: int


def estimate_conditional_correlation(
    data: Dataset,
    cond_cols: t.Sequence[int],
    center: t.Sequence[float],
    delta: float,
    min_count: int = 30,
) -> ConditionalCorrelation:
    """Pearson correlation of ``(Y1, Y0)`` over the rows whose covariates
    ``cond_cols`` (0-based) all lie within ``delta`` of ``center``.
    """
    if data.Y0 is None or data.Y1 is None:
        raise DiagnosticError(
            "the dataset has no counterfactual outcomes; the cross-world "
            "correlation is unidentifiable from factual data alone"
        )
    if len(cond_cols) != len(center):
        raise InputError(
            f"{len(cond_cols)} conditioning columns but {len(center)} centre values"
        )
    if delta <= 0:
        raise InputError(f"delta must be positive, got {delta}")
    for j in cond_cols:
        if not 0 <= j < data.d:
            raise InputError(f"conditioning column {j} outside 0..{data.d - 1}")
    window = np.ones(data.n, dtype=bool)
    for j, c in zip(cond_cols, center):
        window &= np.abs(data.X[:, j] - c) <= delta
    count = int(window.sum())
    if count < min_count:
        raise DiagnosticError(
            f"conditioning window holds {count} rows; at least {min_count} are needed",
            count=count,
        )
    y1, y0 = data.Y1[window], data.Y0[window]
    if np.std(y1) == 0 or np.std(y0) == 0:
        raise DiagnosticError("an outcome is constant within the window", count=count)
    return ConditionalCorrelation(float(np.corrcoef(y1, y0)[0, 1]), count)


def rho_from_variance_decomposition(var_h: float, var_eps: float) -> Rho:
    """``var_h / (var_h + var_eps)``: the cross-world correlation when both
    potential outcomes share a hidden component of variance ``var_h`` and
    carry independent noise of equal variance ``var_eps``.
    """
    if var_h < 0 or var_eps < 0:
        raise DomainError(f"variances must be non-negative, got {var_h}, {var_eps}")
    if var_h + var_eps == 0:
        raise DomainError("var_h and var_eps cannot both be zero")
    return Rho(var_h / (var_h + var_eps))


def ignorability_zscores(
    T: npt.ArrayLike, covariates: npt.ArrayLike, noise: npt.ArrayLike
) -> FloatArray:
    """z-scores of the ``noise`` columns in a logistic regression of ``T``
    on ``covariates`` and ``noise``.  Under ignorability they are standard
    normal draws.
    """
    cov = np.asarray(covariates, dtype=np.float64).reshape(len(np.asarray(T)), -1)
    eps = np.asarray(noise, dtype=np.float64).reshape(len(cov), -1)
    design = sm.add_constant(np.column_stack([cov, eps]))
    fit = sm.Logit(np.asarray(T, dtype=float), design).fit(disp=0)
    return np.asarray(fit.tvalues)[-eps.shape[1] :]
