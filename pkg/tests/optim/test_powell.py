import numpy as np
import pytest

from njtvreg.optim import BracketError, NonFiniteError, StoppingCriteria, brent_minimize, powell_minimize
from njtvreg.optim.powell import LINE_SEARCH_MAX_ITER, MAX_BRACKET_EXPANSIONS

FINE = StoppingCriteria(tolerances=[1e-7], line_tol=1e-8, max_cycles=500)


def rosenbrock(x: np.ndarray) -> float:
    return float((1.0 - x[0]) ** 2 + 100.0 * (x[1] - x[0] ** 2) ** 2)


class TestBrent:
    def test_quadratic(self):
        x, fx = brent_minimize(lambda x: (x - 3.0) ** 2, (0.0, 2.0, 10.0))
        assert x == pytest.approx(3.0, abs=1e-8)
        assert fx == pytest.approx(0.0, abs=1e-15)

    def test_absolute_value(self):
        x, _ = brent_minimize(lambda x: abs(x - 1.0), (0.0, 0.5, 3.0))
        assert x == pytest.approx(1.0, abs=1e-6)

    def test_quartic(self):
        f = lambda x: x**4 - 2.0 * x**2  # noqa: E731
        x, _ = brent_minimize(f, (0.5, 1.2, 2.0))
        grid = np.linspace(0.5, 2.0, 150_001)
        assert x == pytest.approx(grid[np.argmin(f(grid))], abs=1e-4)
        assert x == pytest.approx(1.0, abs=1e-6)

    def test_reversed_bracket(self):
        x, _ = brent_minimize(lambda x: (x + 2.0) ** 2, (1.0, -1.0, -5.0))
        assert x == pytest.approx(-2.0, abs=1e-7)

    @pytest.mark.parametrize("bracket", [(0.0, 5.0, 4.0), (0.0, 0.0, 1.0), (2.9, 10.0, 20.0)])
    def test_invalid_bracket(self, bracket):
        with pytest.raises(BracketError):
            brent_minimize(lambda x: (x - 3.0) ** 2, bracket)


class TestPowell:
    def test_separable_quadratic(self):
        a = np.array([1.0, -2.0, 3.0, 0.5, 0.0, -1.0])
        result = powell_minimize(lambda x: float(np.sum((x - a) ** 2)), np.zeros(6), FINE)
        np.testing.assert_allclose(result.x, a, atol=1e-6)
        assert result.fun <= float(np.sum(a**2))

    def test_rosenbrock(self):
        result = powell_minimize(rosenbrock, [-1.2, 1.0], FINE)
        np.testing.assert_allclose(result.x, [1.0, 1.0], atol=1e-4)

    def test_plateau(self):
        result = powell_minimize(lambda x: max(float(np.linalg.norm(x)) - 1.0, 0.0), [3.0, 3.0])
        assert result.fun == 0.0
        assert np.linalg.norm(result.x) <= 1.0

    def test_history_non_increasing(self):
        result = powell_minimize(rosenbrock, [-1.2, 1.0], FINE)
        assert result.history[0] == rosenbrock(np.array([-1.2, 1.0]))
        assert np.all(np.diff(result.history) <= 0.0)
        assert len(result.history) == result.cycles + 1

    def test_evaluation_count_bounded(self):
        result = powell_minimize(rosenbrock, [-1.2, 1.0], FINE)
        per_line_search = MAX_BRACKET_EXPANSIONS + LINE_SEARCH_MAX_ITER + 2
        assert result.n_evals <= result.cycles * (2 + 1) * per_line_search + result.cycles + 1

    def test_deterministic(self):
        first = powell_minimize(rosenbrock, [-1.2, 1.0], FINE)
        second = powell_minimize(rosenbrock, [-1.2, 1.0], FINE)
        np.testing.assert_array_equal(first.x, second.x)
        assert first.n_evals == second.n_evals

    def test_cycle_cap(self):
        result = powell_minimize(rosenbrock, [-1.2, 1.0], StoppingCriteria(tolerances=[1e-7], max_cycles=1))
        assert result.cycles == 1
        assert result.fun <= rosenbrock(np.array([-1.2, 1.0]))

    def test_already_at_minimum(self):
        result = powell_minimize(lambda x: float(np.sum(x**2)), np.zeros(3))
        np.testing.assert_array_equal(result.x, np.zeros(3))
        assert result.cycles == 1

    def test_non_finite_carries_point(self):
        def f(x):
            return float("nan") if x[0] > 1.5 else (x[0] - 5.0) ** 2

        with pytest.raises(NonFiniteError) as excinfo:
            powell_minimize(f, [0.0], StoppingCriteria(tolerances=[1.0]))
        assert excinfo.value.point[0] == 2.0
        assert np.isnan(excinfo.value.value)

    def test_non_finite_start(self):
        with pytest.raises(NonFiniteError):
            powell_minimize(lambda x: float("inf"), [0.0, 0.0])


class TestStoppingCriteria:
    def test_for_rigid(self):
        crit = StoppingCriteria.for_rigid(2)
        np.testing.assert_array_equal(crit.tolerances, [0.02] * 3 + [0.001] * 3 + [0.02] * 3 + [0.001] * 3)
        assert StoppingCriteria.for_rigid(1, max_cycles=3).max_cycles == 3

    @pytest.mark.parametrize(
        "kwargs",
        [{"tolerances": [0.0]}, {"tolerances": []}, {"max_cycles": 0}, {"line_tol": 0.0}],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            StoppingCriteria(**kwargs)
