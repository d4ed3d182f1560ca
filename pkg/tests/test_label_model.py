import itertools
import math

import numpy as np
import pytest
from sklearn.base import clone

from weakrank.label_model import (
    PROJECTION_MARGIN,
    AggregatedLabel,
    FitOptions,
    GenerativeLabelModel,
    GenerativeParams,
    MajorityVoter,
    TraceRow,
    aggregate,
    fit_generative_model,
    log_likelihood_gradient,
    majority_vote,
    marginal_log_likelihood,
    posterior,
    read_aggregated,
    write_aggregated,
    write_fit_trace,
)
from weakrank.labeling import LabelMatrix

DELTA = PROJECTION_MARGIN


# --- independent brute-force oracle: plain-Python joint enumeration ---------

def oracle_row_prob(row, alpha, beta, gamma):
    total = 0.0
    for y, prior in ((1, gamma), (-1, 1.0 - gamma)):
        p = prior
        for lam, a, b in zip(row, alpha, beta):
            if lam == 0:
                p *= 1.0 - b
            elif lam == y:
                p *= b * a
            else:
                p *= b * (1.0 - a)
        total += p
    return total


def oracle_posterior(row, alpha, beta, gamma):
    joint = {}
    for y, prior in ((1, gamma), (-1, 1.0 - gamma)):
        p = prior
        for lam, a, b in zip(row, alpha, beta):
            if lam == 0:
                p *= 1.0 - b
            elif lam == y:
                p *= b * a
            else:
                p *= b * (1.0 - a)
        joint[y] = p
    return joint[1] / (joint[1] + joint[-1])


def oracle_log_likelihood(labels, alpha, beta, gamma):
    return sum(math.log(oracle_row_prob(row, alpha, beta, gamma))
               for row in labels) / len(labels)


def sample_matrix(alpha, beta, gamma, n, rng):
    """The Monte-Carlo generator that doubles as the recovery oracle."""
    k = len(alpha)
    y = np.where(rng.random(n) < gamma, 1, -1).astype(np.int8)
    cols = []
    for j in range(k):
        votes = rng.random(n) < beta[j]
        agrees = rng.random(n) < alpha[j]
        cols.append(np.where(votes, np.where(agrees, y, -y), 0))
    return np.stack(cols, axis=1).astype(np.int8)


def params_of(alpha, beta, gamma, names=None):
    return GenerativeParams(alpha=np.asarray(alpha, float),
                            beta=np.asarray(beta, float),
                            gamma=gamma, function_names=names)


class TestMarginalLogLikelihood:
    def test_all_abstain_closed_form(self):
        p = params_of([0.8], [0.3], 0.5)
        labels = np.zeros((5, 1), dtype=np.int8)
        assert marginal_log_likelihood(p, labels) == pytest.approx(math.log(0.7), abs=1e-12)

    def test_single_positive_row_closed_form(self):
        # with full coverage the value is log(gamma*a + (1-gamma)*(1-a));
        # beta sits at the projection boundary 1 - delta, scaling by (1 - delta)
        b = 1.0 - DELTA
        p = params_of([0.8], [b], 0.5)
        got = marginal_log_likelihood(p, np.array([[1]]))
        assert got == pytest.approx(math.log(0.5 * b), abs=1e-12)

    def test_k2_matches_bruteforce(self):
        labels = np.array([[1, -1], [0, 1], [-1, -1], [0, 0]], dtype=np.int8)
        p = params_of([0.7, 0.9], [0.6, 0.4], 0.3)
        expected = oracle_log_likelihood(labels, p.alpha, p.beta, p.gamma)
        assert marginal_log_likelihood(p, labels) == pytest.approx(expected, abs=1e-12)

    def test_row_order_invariant_bitwise(self):
        rng = np.random.default_rng(0)
        labels = rng.integers(-1, 2, size=(50, 3)).astype(np.int8)
        p = params_of([0.7, 0.8, 0.6], [0.5, 0.2, 0.9], 0.1)
        shuffled = labels[rng.permutation(50)]
        assert marginal_log_likelihood(p, labels) == marginal_log_likelihood(p, shuffled)

    def test_nonpositive(self):
        rng = np.random.default_rng(1)
        labels = rng.integers(-1, 2, size=(30, 4)).astype(np.int8)
        p = params_of([0.6, 0.7, 0.8, 0.9], [0.1, 0.4, 0.7, 0.95], 0.2)
        assert marginal_log_likelihood(p, labels) <= 0.0

    def test_column_mismatch(self):
        p = params_of([0.8], [0.5], 0.5)
        with pytest.raises(ValueError, match="columns"):
            marginal_log_likelihood(p, np.zeros((3, 2), dtype=np.int8))


class TestExhaustiveOracleEquivalence:
    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_all_rows_all_params(self, k):
        rng = np.random.default_rng(17 + k)
        rows = np.array(list(itertools.product([-1, 0, 1], repeat=k)), dtype=np.int8)
        for _ in range(5):
            alpha = rng.uniform(0.55, 0.95, size=k)
            beta = rng.uniform(0.05, 0.95, size=k)
            gamma = rng.uniform(0.05, 0.95)
            p = params_of(alpha, beta, gamma)
            got_ll = marginal_log_likelihood(p, rows)
            assert got_ll == pytest.approx(
                oracle_log_likelihood(rows, alpha, beta, gamma), abs=1e-10)
            for row in rows:
                assert posterior(p, row) == pytest.approx(
                    oracle_posterior(row, alpha, beta, gamma), abs=1e-10)


class TestGradient:
    def test_matches_central_differences(self):
        rng = np.random.default_rng(5)
        labels = rng.integers(-1, 2, size=(40, 3)).astype(np.int8)
        h = 1e-5
        for _ in range(20):
            alpha = rng.uniform(0.55, 0.95, size=3)
            beta = rng.uniform(0.05, 0.95, size=3)
            gamma = rng.uniform(0.1, 0.9)
            d_alpha, d_beta = log_likelihood_gradient(
                params_of(alpha, beta, gamma), labels)

            for j in range(3):
                for arr, grad in ((alpha, d_alpha), (beta, d_beta)):
                    hi, lo = arr.copy(), arr.copy()
                    hi[j] += h
                    lo[j] -= h
                    if arr is alpha:
                        f_hi = marginal_log_likelihood(params_of(hi, beta, gamma), labels)
                        f_lo = marginal_log_likelihood(params_of(lo, beta, gamma), labels)
                    else:
                        f_hi = marginal_log_likelihood(params_of(alpha, hi, gamma), labels)
                        f_lo = marginal_log_likelihood(params_of(alpha, lo, gamma), labels)
                    fd = (f_hi - f_lo) / (2 * h)
                    denom = max(abs(fd), abs(grad[j]), 1e-12)
                    assert abs(grad[j] - fd) / denom < 1e-4

    def test_zero_alpha_gradient_on_all_abstain(self):
        labels = np.zeros((10, 2), dtype=np.int8)
        d_alpha, d_beta = log_likelihood_gradient(
            params_of([0.7, 0.7], [0.5, 0.5], 0.5), labels)
        assert np.all(d_alpha == 0.0)
        assert np.all(d_beta < 0.0)


class TestFit:
    def test_full_coverage_drives_beta_to_boundary(self):
        rng = np.random.default_rng(2)
        labels = rng.choice([-1, 1], size=(200, 2)).astype(np.int8)
        params, _ = fit_generative_model(labels, gamma=0.5)
        assert np.all(params.beta >= 1.0 - DELTA - 1e-6)

    def test_all_abstain(self):
        labels = np.zeros((20, 3), dtype=np.int8)
        params, _ = fit_generative_model(labels, gamma=0.5)
        assert np.allclose(params.alpha, 0.7)
        assert np.all(params.beta <= DELTA + 1e-9)

    def test_parameter_recovery(self):
        alpha_true = np.array([0.85, 0.7, 0.9, 0.6])
        beta_true = np.array([0.6, 0.8, 0.3, 0.5])
        gamma = 0.1
        labels = sample_matrix(alpha_true, beta_true, gamma, 10_000,
                               np.random.default_rng(11))
        params, trace = fit_generative_model(labels, gamma=gamma)
        assert np.max(np.abs(params.alpha - alpha_true)) <= 0.05
        assert np.max(np.abs(params.beta - beta_true)) <= 0.05

    def test_trace_is_monotone_nondecreasing(self):
        labels = sample_matrix(np.array([0.8, 0.7]), np.array([0.5, 0.6]), 0.3,
                               500, np.random.default_rng(3))
        _, trace = fit_generative_model(labels, gamma=0.3)
        objectives = [row.objective for row in trace]
        assert all(b >= a for a, b in zip(objectives, objectives[1:]))
        assert len(objectives) >= 2

    def test_row_permutation_invariant_fit(self):
        rng = np.random.default_rng(4)
        labels = sample_matrix(np.array([0.8, 0.65]), np.array([0.4, 0.7]), 0.2,
                               300, rng)
        shuffled = labels[rng.permutation(len(labels))]
        p1, _ = fit_generative_model(labels, gamma=0.2)
        p2, _ = fit_generative_model(shuffled, gamma=0.2)
        assert np.array_equal(p1.alpha, p2.alpha)
        assert np.array_equal(p1.beta, p2.beta)

    def test_gamma_fixed_not_fitted(self):
        labels = sample_matrix(np.array([0.8]), np.array([0.9]), 0.25, 200,
                               np.random.default_rng(6))
        params, _ = fit_generative_model(labels, gamma=0.25)
        assert params.gamma == 0.25

    def test_bad_gamma(self):
        with pytest.raises(ValueError, match="gamma"):
            fit_generative_model(np.array([[1]], dtype=np.int8), gamma=0.0)

    def test_fit_options_validated(self):
        with pytest.raises(ValueError):
            FitOptions(step_size=0.0)
        with pytest.raises(ValueError):
            FitOptions(max_iter=0)


class TestPosterior:
    def test_single_positive_vote(self):
        # beta cancels, so the boundary value 1 - delta is immaterial
        p = params_of([0.8], [1.0 - DELTA], 0.5)
        assert posterior(p, [1]) == pytest.approx(0.8, abs=1e-12)

    def test_all_abstain_returns_gamma_exactly(self):
        p = params_of([0.8, 0.7, 0.9], [0.5, 0.5, 0.5], 0.37)
        assert posterior(p, [0, 0, 0]) == 0.37

    def test_k3_mixed_matches_bruteforce(self):
        p = params_of([0.8, 0.6, 0.95], [0.5, 0.7, 0.2], 0.15)
        for row in ([1, -1, 0], [1, 1, 1], [-1, 0, 1], [0, -1, -1]):
            assert posterior(p, row) == pytest.approx(
                oracle_posterior(row, p.alpha, p.beta, p.gamma), abs=1e-12)

    def test_shape_checked(self):
        p = params_of([0.8], [0.5], 0.5)
        with pytest.raises(ValueError):
            posterior(p, [1, -1])


class TestMajorityVote:
    def test_majority_with_abstain(self):
        got = majority_vote([1, 1, -1, 0])
        assert got.label == 1
        assert got.confidence == pytest.approx(2 / 3)

    def test_all_abstain(self):
        assert majority_vote([0, 0, 0, 0]) is None

    def test_exact_tie(self):
        assert majority_vote([1, -1, 0, 0]) is None

    def test_negative_majority(self):
        got = majority_vote([-1, -1, 1])
        assert got.label == -1
        assert got.confidence == pytest.approx(2 / 3)

    def test_column_order_invariant(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            row = rng.integers(-1, 2, size=6)
            perm = rng.permutation(6)
            assert majority_vote(row) == majority_vote(row[perm])


class TestAggregate:
    def _matrix(self, labels, names=None):
        labels = np.asarray(labels, dtype=np.int8)
        names = names or tuple(f"f{j}" for j in range(labels.shape[1]))
        pairs = tuple((f"q{i}", f"p{i}") for i in range(labels.shape[0]))
        return LabelMatrix(pairs=pairs, function_names=tuple(names), labels=labels)

    def test_majority_method(self):
        matrix = self._matrix([[1, 1, -1, 0], [0, 0, 0, 0], [1, -1, 0, 0]])
        got = aggregate(matrix, "majority")
        assert got[0][1] == AggregatedLabel(1, 2 / 3)
        assert got[1][1] is None
        assert got[2][1] is None

    def test_generative_thresholds(self):
        # alpha=0.8, gamma=0.5: a +1 vote gives p=0.8, a -1 vote p=0.2
        p = params_of([0.8], [0.5], 0.5, names=("f0",))
        matrix = self._matrix([[1], [-1]], names=("f0",))
        got = aggregate(matrix, "generative", params=p)
        assert got[0][1].label == 1
        assert got[0][1].confidence == pytest.approx(0.8, abs=1e-12)
        assert got[1][1].label == -1
        assert got[1][1].confidence == pytest.approx(0.8, abs=1e-12)

    def test_generative_tie_abstains(self):
        # all-abstain row with gamma exactly 0.5 posteriors to exactly 0.5
        p = params_of([0.8], [0.5], 0.5, names=("f0",))
        matrix = self._matrix([[0]], names=("f0",))
        assert aggregate(matrix, "generative", params=p)[0][1] is None

    def test_column_count_mismatch(self):
        p = params_of([0.8], [0.5], 0.5)
        matrix = self._matrix([[1, -1]])
        with pytest.raises(ValueError, match="columns"):
            aggregate(matrix, "generative", params=p)

    def test_column_name_mismatch(self):
        p = params_of([0.8], [0.5], 0.5, names=("other",))
        matrix = self._matrix([[1]], names=("f0",))
        with pytest.raises(ValueError, match="fitted on columns"):
            aggregate(matrix, "generative", params=p)

    def test_unknown_method(self):
        with pytest.raises(ValueError, match="method"):
            aggregate(self._matrix([[1]]), "averaging")

    def test_aggregated_file_round_trip(self, tmp_path):
        matrix = self._matrix([[1, 1, -1, 0], [0, 0, 0, 0]])
        agg = aggregate(matrix, "majority")
        path = tmp_path / "agg.tsv"
        write_aggregated(agg, path)
        again = read_aggregated(path)
        assert len(again) == 2
        assert again[0][0] == ("q0", "p0")
        assert again[0][1].label == 1
        assert again[0][1].confidence == pytest.approx(2 / 3)
        assert again[1][1] is None


class TestSerialization:
    def test_params_json_round_trip(self, tmp_path):
        p = params_of([0.8, 0.6], [0.5, 0.7], 0.1, names=("a", "b"))
        path = tmp_path / "params.json"
        p.to_json(path)
        q = GenerativeParams.from_json(path)
        assert np.array_equal(p.alpha, q.alpha)
        assert np.array_equal(p.beta, q.beta)
        assert q.gamma == 0.1
        assert q.function_names == ("a", "b")

    def test_trace_csv(self, tmp_path):
        trace = [TraceRow(0, -1.5, 0.0), TraceRow(1, -1.2, 0.5)]
        path = tmp_path / "trace.csv"
        write_fit_trace(trace, path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "iteration,objective,step_size"
        assert lines[1].startswith("0,-1.5")

    def test_params_box_validated(self):
        with pytest.raises(ValueError):
            params_of([0.4], [0.5], 0.5)  # alpha below identifiability bound
        with pytest.raises(ValueError):
            params_of([0.8], [1.0], 0.5)  # beta outside the projection box
        with pytest.raises(ValueError):
            params_of([0.8], [0.5], 1.0)  # gamma not in (0, 1)


class TestEstimators:
    def test_generative_estimator_fit_predict(self):
        rng = np.random.default_rng(8)
        labels = sample_matrix(np.array([0.9, 0.8, 0.7]),
                               np.array([0.7, 0.5, 0.6]), 0.3, 2000, rng)
        model = GenerativeLabelModel(gamma=0.3).fit(labels)
        assert model.alpha_.shape == (3,)
        proba = model.predict_proba(labels[:10])
        assert proba.shape == (10, 2)
        assert np.allclose(proba.sum(axis=1), 1.0)
        preds = model.predict(labels[:10])
        assert set(np.unique(preds)) <= {-1, 0, 1}
        conf = model.confidence(labels[:10])
        assert np.all((conf >= 0.5) & (conf <= 1.0))
        assert model.score(labels) <= 0.0

    def test_estimator_clone_roundtrip(self):
        model = GenerativeLabelModel(gamma=0.2, max_iter=10)
        cloned = clone(model)
        assert cloned.get_params() == model.get_params()

    def test_majority_voter(self):
        voter = MajorityVoter().fit(np.array([[1, -1]]))
        L = np.array([[1, 1, -1, 0], [0, 0, 0, 0], [1, -1, 0, 0]], dtype=np.int8)
        preds = voter.predict(L)
        assert list(preds) == [1, 0, 0]
        conf = voter.confidence(L)
        assert conf[0] == pytest.approx(2 / 3)
        assert conf[1] == 0.0
