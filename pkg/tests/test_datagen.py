import math

import numpy as np
import pytest
from scipy import stats

from crossworld import (
    ConfigurationError,
    CsvSchema,
    Dataset,
    DiagnosticError,
    DomainError,
    InputError,
    NoiseSpec,
    Rho,
    estimate_conditional_correlation,
    gen_copula_noise,
    gen_hidden_covariate,
    gen_semi_synthetic,
    gen_synthetic,
    load_csv,
    rho_from_variance_decomposition,
    split_dataset,
    write_csv,
)
from crossworld.datagen import (
    TAU_SCALE,
    frank_kendall_tau,
    frank_spearman_rho,
    frank_theta_for_rho,
    ignorability_zscores,
    make_design,
    propensity,
    sample_covariates,
)


def test_dataset_validation() -> None:
    with pytest.raises(InputError, match="0 and 1"):
        Dataset(X=np.zeros((3, 1)), T=[0, 1, 2], Y=np.zeros(3))
    with pytest.raises(InputError, match="row 1"):
        Dataset(X=np.zeros((2, 1)), T=[0, 1], Y=[0.0, 5.0], Y0=[0.0, 0.0], Y1=[1.0, 1.0])
    with pytest.raises(InputError, match="together"):
        Dataset(X=np.zeros((2, 1)), T=[0, 1], Y=[0.0, 1.0], Y0=[0.0, 0.0])
    with pytest.raises(InputError, match="non-finite"):
        Dataset(X=[[np.nan], [0.0]], T=[0, 1], Y=[0.0, 1.0])

    data = Dataset(X=[0.0, 1.0, 2.0], T=[0, 1, 1], Y=[0.0, 1.0, 2.0])
    assert (data.n, data.d) == (3, 1)
    assert data.arm_counts() == (1, 2)
    assert not data.has_counterfactuals
    with pytest.raises(InputError):
        data.ite


def test_synthetic_data_structure() -> None:
    data = gen_synthetic(2000, 1, 0.5, seed=1)
    assert data.X.shape == (2000, 1)
    assert ((data.X >= -1.0) & (data.X <= 1.0)).all()
    assert ((data.propensity >= 0.25) & (data.propensity <= 0.5)).all()
    np.testing.assert_array_equal(data.propensity, propensity(data.X))
    np.testing.assert_array_equal(data.Y, np.where(data.T == 1, data.Y1, data.Y0))
    assert 0.25 < data.T.mean() < 0.5
    assert data.meta["noise"] == "gaussian/gaussian"
    assert data.meta["rho"] == 0.5


def test_synthetic_data_is_reproducible() -> None:
    first = gen_synthetic(300, 2, 0.0, seed=7)
    second = gen_synthetic(300, 2, 0.0, seed=7)
    other = gen_synthetic(300, 2, 0.0, seed=8)
    np.testing.assert_array_equal(first.Y, second.Y)
    np.testing.assert_array_equal(first.X, second.X)
    assert not np.array_equal(first.Y, other.Y)


def test_shared_design_keeps_the_cate_surface() -> None:
    design = make_design(2, seed=3)
    train = gen_synthetic(100, 2, 0.0, seed=1, design=design)
    test = gen_synthetic(100, 2, 0.0, seed=2, design=design)
    np.testing.assert_allclose(test.tau, design.tau(test.X))
    assert train.meta["design"] == test.meta["design"]
    with pytest.raises(ConfigurationError):
        gen_synthetic(100, 3, 0.0, seed=1, design=design)


def test_cate_surface_scale() -> None:
    design = make_design(1, seed=4)
    X = sample_covariates(50_000, 1, seed=5)
    assert np.std(design.tau(X)) == pytest.approx(TAU_SCALE, rel=0.05)


def test_multivariate_covariates_are_uniform() -> None:
    X = sample_covariates(20_000, 3, seed=6)
    assert ((X > 0.0) & (X < 1.0)).all()
    np.testing.assert_allclose(X.mean(axis=0), 0.5, atol=0.02)
    with pytest.raises(ConfigurationError):
        sample_covariates(10, 0)


def test_equal_variance_comonotone_noise_gives_exact_effects() -> None:
    data = gen_synthetic(500, 1, 1.0, seed=2, equal_variance=True)
    np.testing.assert_allclose(data.ite, data.tau, atol=1e-9)


def test_gaussian_noise_covariance() -> None:
    eps0, eps1 = gen_copula_noise(NoiseSpec(rho=Rho(0.5)), 40_000, seed=0)
    cov = np.cov(eps0, eps1)
    assert cov[0, 0] == pytest.approx(1.0, abs=0.05)
    assert cov[1, 1] == pytest.approx(4.0, abs=0.15)
    assert np.corrcoef(eps0, eps1)[0, 1] == pytest.approx(0.5, abs=0.02)


@pytest.mark.parametrize("label", ["laplace/gaussian", "student_t3/student_t", "gaussian/frank"])
def test_noise_families_have_unit_scale(label: str) -> None:
    noise = NoiseSpec.parse(label, rho=0.3, sigma1=1.0)
    assert noise.label == label
    eps0, eps1 = gen_copula_noise(noise, 40_000, seed=1)
    if not label.startswith("student"):
        assert np.var(eps0) == pytest.approx(1.0, rel=0.1)
    assert stats.spearmanr(eps0, eps1).statistic > 0.15


def test_extreme_rho_is_a_monotone_coupling() -> None:
    for label in ("gaussian/frank", "laplace/student_t"):
        eps0, eps1 = gen_copula_noise(NoiseSpec.parse(label, rho=-1.0), 1000, seed=2)
        assert stats.spearmanr(eps0, eps1).statistic == pytest.approx(-1.0)


def test_noise_spec_validation() -> None:
    with pytest.raises(ConfigurationError, match="marginal"):
        NoiseSpec.parse("cauchy/gaussian")
    with pytest.raises(ConfigurationError, match="copula"):
        NoiseSpec.parse("gaussian/clayton")
    with pytest.raises(ConfigurationError):
        NoiseSpec(sigma0=0.0)
    assert NoiseSpec.parse("laplace").copula == "gaussian"
    assert NoiseSpec().with_rho(0.2).rho == Rho(0.2)


def test_frank_parameter_matches_gaussian_kendall_tau() -> None:
    theta = frank_theta_for_rho(0.5)
    assert theta > 0
    assert frank_kendall_tau(theta) == pytest.approx(1.0 / 3.0, abs=1e-6)
    assert frank_theta_for_rho(-0.5) == pytest.approx(-theta)
    assert frank_theta_for_rho(0.0) == 0.0
    assert frank_spearman_rho(0.0) == 0.0
    with pytest.raises(ConfigurationError):
        frank_theta_for_rho(1.0)


def test_frank_sample_dependence() -> None:
    theta = frank_theta_for_rho(0.5)
    eps0, eps1 = gen_copula_noise(NoiseSpec.parse("gaussian/frank", rho=0.5), 20_000, seed=3)
    assert stats.spearmanr(eps0, eps1).statistic == pytest.approx(
        frank_spearman_rho(theta), abs=0.03
    )
    assert stats.kendalltau(eps0[:5000], eps1[:5000]).statistic == pytest.approx(
        1.0 / 3.0, abs=0.03
    )


def test_hidden_covariate_correlation() -> None:
    data = gen_hidden_covariate(40_000, 1, 1.0, 3.0, seed=4)
    assert data.meta["rho"] == 0.25
    base = data.X @ np.asarray(data.meta["design"]["beta"])
    residual0 = data.Y0 - base
    residual1 = data.Y1 - base - data.tau
    assert np.corrcoef(residual0, residual1)[0, 1] == pytest.approx(0.25, abs=0.02)


@pytest.mark.slow
def test_windowed_correlation_recovers_the_hidden_share() -> None:
    data = gen_hidden_covariate(100_000, 1, 1.0, 3.0, seed=7)
    expected = rho_from_variance_decomposition(1.0, 3.0).value
    assert expected == 0.25
    result = estimate_conditional_correlation(data, [0], [0.0], 0.05)
    assert result.count > 3000
    assert result.estimate == pytest.approx(expected, abs=0.05)


def test_windowed_correlation_of_additive_noise() -> None:
    data = gen_synthetic(20_000, 1, 1.0, seed=8, equal_variance=True)
    result = estimate_conditional_correlation(data, [0], [0.3], 0.1)
    assert result.estimate >= 0.95


def test_hidden_covariate_rejects_empty_shapes() -> None:
    with pytest.raises(ConfigurationError, match="n must"):
        gen_hidden_covariate(0, 1, 1.0, 3.0)
    with pytest.raises(ConfigurationError, match="d must"):
        gen_hidden_covariate(10, 0, 1.0, 3.0)


def test_semi_synthetic_outcomes() -> None:
    rng = np.random.default_rng(5)
    X = rng.normal(size=(300, 4))
    T = rng.integers(0, 2, size=300)
    data = gen_semi_synthetic(X, T, 1.0, seed=6)
    np.testing.assert_array_equal(data.T, T)
    np.testing.assert_allclose(data.ite, 4.0, atol=1e-9)
    assert set(data.meta["beta"]) <= {0.0, 1.0, 2.0, 3.0, 4.0}


def test_variance_decomposition() -> None:
    assert rho_from_variance_decomposition(0.0, 1.0) == Rho(0.0)
    assert rho_from_variance_decomposition(1.0, 0.0) == Rho(1.0)
    assert rho_from_variance_decomposition(1.0, 3.0) == Rho(0.25)
    with pytest.raises(DomainError):
        rho_from_variance_decomposition(0.0, 0.0)
    with pytest.raises(DomainError):
        rho_from_variance_decomposition(-1.0, 1.0)


def test_split_is_stratified_and_reproducible() -> None:
    data = gen_synthetic(1000, 1, 0.0, seed=8)
    plan = split_dataset(data, 0.5, seed=1)
    assert len(plan.train) + len(plan.calibration) == data.n
    assert abs(plan.train_counts[1] - plan.calibration_counts[1]) <= 1
    assert sum(plan.train_counts) == len(plan.train)
    again = split_dataset(data, 0.5, seed=1)
    np.testing.assert_array_equal(plan.train, again.train)

    plan = split_dataset(data, 0.3, seed=2, stratify_by_arm=False)
    assert len(plan.train) == 300


def test_split_rejects_bad_inputs() -> None:
    data = gen_synthetic(50, 1, 0.0, seed=9)
    with pytest.raises(ConfigurationError, match="ratio"):
        split_dataset(data, 0.0)
    lonely = Dataset(X=np.zeros((5, 1)), T=[1, 0, 0, 0, 0], Y=np.zeros(5))
    with pytest.raises(InputError, match="arm 1"):
        split_dataset(lonely)


def test_csv_round_trip(tmp_path) -> None:
    data = gen_synthetic(50, 3, 0.2, seed=10)
    path = tmp_path / "data.csv"
    write_csv(data, path)
    header = path.read_text(encoding="utf-8").splitlines()[0]
    assert header == "x1,x2,x3,t,y,y0,y1,tau"
    loaded = load_csv(path)
    np.testing.assert_array_equal(loaded.X, data.X)
    np.testing.assert_array_equal(loaded.Y1, data.Y1)
    np.testing.assert_array_equal(loaded.tau, data.tau)
    assert loaded.meta["source"] == str(path)


def test_csv_factual_only_and_custom_schema(tmp_path) -> None:
    path = tmp_path / "obs.csv"
    path.write_text("age,treated,outcome\n30,1,2.5\n41,0,1.0\n", encoding="utf-8")
    schema = CsvSchema(x_columns=("age",), t="treated", y="outcome")
    data = load_csv(path, schema)
    assert not data.has_counterfactuals
    assert data.X[:, 0].tolist() == [30.0, 41.0]


def test_csv_errors_name_the_row(tmp_path) -> None:
    path = tmp_path / "bad.csv"
    path.write_text("x1,t,y\n0.1,0,1.0\n0.2,2,1.5\n", encoding="utf-8")
    with pytest.raises(InputError, match="row 3"):
        load_csv(path)
    path.write_text("x1,t,y\n0.1,0,1.0\n0.2,1,1.5\nabc,0,0.0\n", encoding="utf-8")
    with pytest.raises(InputError, match="row 4.*x1"):
        load_csv(path)
    path.write_text("x1,y\n0.1,1.0\n", encoding="utf-8")
    with pytest.raises(InputError, match="missing"):
        load_csv(path)
    with pytest.raises(InputError, match="cannot read"):
        load_csv(tmp_path / "absent.csv")


def _correlated_outcomes(n: int, rho: float, seed: int) -> Dataset:
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n, 2))
    eps0, eps1 = gen_copula_noise(NoiseSpec(rho=rho, sigma1=1.0), n, rng)
    T = rng.integers(0, 2, size=n)
    return Dataset(X=X, T=T, Y=np.where(T == 1, eps1, eps0), Y0=eps0, Y1=eps1)


def test_conditional_correlation_window() -> None:
    data = _correlated_outcomes(20_000, 0.6, seed=11)
    result = estimate_conditional_correlation(data, [0], [0.0], 0.1)
    assert 1700 < result.count < 2300
    assert result.estimate == pytest.approx(0.6, abs=0.08)

    both = estimate_conditional_correlation(data, [0, 1], [0.0, 0.5], 0.2, min_count=100)
    assert 0 < both.count < result.count


def test_conditional_correlation_failures() -> None:
    data = _correlated_outcomes(500, 0.0, seed=12)
    with pytest.raises(DiagnosticError) as info:
        estimate_conditional_correlation(data, [0], [0.0], 0.01, min_count=30)
    assert info.value.count is not None and info.value.count < 30
    with pytest.raises(InputError):
        estimate_conditional_correlation(data, [5], [0.0], 0.1)
    with pytest.raises(InputError):
        estimate_conditional_correlation(data, [0, 1], [0.0], 0.1)

    factual = Dataset(X=data.X, T=data.T, Y=data.Y)
    with pytest.raises(DiagnosticError, match="unidentifiable"):
        estimate_conditional_correlation(factual, [0], [0.0], 0.5)


def test_ignorability_zscores_under_random_noise() -> None:
    data = gen_synthetic(3000, 1, 0.0, seed=13)
    noise = np.random.default_rng(14).standard_normal((3000, 2))
    z = ignorability_zscores(data.T, data.X, noise)
    assert z.shape == (2,)
    assert (np.abs(z) < 4.0).all()
    assert math.isfinite(float(z[0]))


@pytest.mark.slow
def test_generated_noise_is_ignorable() -> None:
    data = gen_synthetic(100_000, 1, 0.5, seed=15)
    base = data.X @ np.asarray(data.meta["design"]["beta"])
    noise = np.column_stack([data.Y0 - base, data.Y1 - base - data.tau])
    z = ignorability_zscores(data.T, data.X, noise)
    assert (np.abs(z) < 3.0).all()
