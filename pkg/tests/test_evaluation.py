import math

import numpy as np
import pytest
from jinja2.exceptions import UndefinedError
from scipy.spatial.transform import Rotation

from njtvreg.evaluation import (
    ERROR_COLUMNS,
    FAILED_ERROR,
    ErrorRow,
    ErrorTable,
    RankDeficientError,
    corner_error,
    geometric_stats,
    loglinear_fit,
    param_error,
    render_report,
    summarize,
    table_from_records,
)
from njtvreg.se3 import exp_se3, log_se3, rigid_from_euler
from njtvreg.simulation.run import ChannelDegradation, TrialRecord
from njtvreg.volume import Volume
from tests.conftest import centred_world


def row(error: float, *, method="njtv", kind="t", axis="x", trial=0, inu=0.1, noise=0.2, ds=2.0, offset=50.0):
    return ErrorRow(trial, method, 1, kind, axis, error, inu, noise, ds, offset)


def record(trial: int, truth, estimates: dict) -> TrialRecord:
    degradations = [
        ChannelDegradation(0.2, 2, 0, 0.1, None, np.eye(4).tolist()),
        ChannelDegradation(0.4, 4, 1, 0.3, 2, np.eye(4).tolist()),
    ]
    return TrialRecord(trial, 0, [[0.0] * 6, list(truth)], degradations, 50.0, 15.0, estimates)


class TestParamError:
    def test_exact(self):
        q = np.array([1.0, -2.0, 3.0, 0.1, 0.2, -0.1])
        dt, dr = param_error(q, q)
        np.testing.assert_allclose(dt, 0.0, atol=1e-12)
        np.testing.assert_allclose(dr, 0.0, atol=1e-9)

    def test_pure_translation(self):
        dt, dr = param_error([1.0, 2.0, 3.0, 0, 0, 0], np.zeros(6))
        np.testing.assert_allclose(dt, [1.0, 2.0, 3.0])
        np.testing.assert_allclose(dr, 0.0, atol=1e-12)

    def test_rotation_about_y(self):
        q_true = np.array([5.0, -3.0, 2.0, 0.05, -0.02, 0.08])
        q_est = log_se3(rigid_from_euler([0, 0, 0], [0, 2, 0]) @ exp_se3(q_true))
        dt, dr = param_error(q_est, q_true)
        np.testing.assert_allclose(dr, [0.0, 2.0, 0.0], atol=1e-9)

    @pytest.mark.parametrize(
        "delta",
        [rigid_from_euler([1.0, -2.0, 0.5], [0, 0, 0]), rigid_from_euler([0, 0, 0], [0, 0, 7.0])],
    )
    def test_symmetric(self, delta):
        q_true = log_se3(rigid_from_euler([3.0, 1.0, -2.0], [4.0, -5.0, 6.0]))
        q_est = log_se3(delta @ exp_se3(q_true))
        forward = param_error(q_est, q_true)
        backward = param_error(q_true, q_est)
        for a, b in zip(forward, backward):
            np.testing.assert_allclose(a, b, atol=1e-9)


class TestGeometricStats:
    def test_simple(self):
        assert geometric_stats([1.0, 100.0])[0] == pytest.approx(10.0)
        gmean, gsd = geometric_stats([5.0, 5.0, 5.0])
        assert gmean == pytest.approx(5.0)
        assert gsd == pytest.approx(1.0)

    def test_lognormal_sample(self):
        values = np.random.default_rng(0).lognormal(math.log(0.048), 0.5, 10_000)
        assert geometric_stats(values)[0] == pytest.approx(0.048, rel=0.02)

    def test_scale_equivariance(self):
        values = np.random.default_rng(1).lognormal(0.0, 1.0, 100)
        gmean, gsd = geometric_stats(values)
        gmean_k, gsd_k = geometric_stats(7.0 * values)
        assert gmean_k == pytest.approx(7.0 * gmean)
        assert gsd_k == pytest.approx(gsd)

    def test_zero_floored(self):
        assert geometric_stats([0.0, 1e-6])[0] == pytest.approx(1e-6)

    def test_empty(self):
        assert all(math.isnan(v) for v in geometric_stats([]))

    def test_failures_ignored(self):
        assert geometric_stats([1.0, 100.0, FAILED_ERROR])[0] == pytest.approx(10.0)
        assert all(math.isnan(v) for v in geometric_stats([FAILED_ERROR, FAILED_ERROR]))


class TestLogLinearFit:
    def planted(self, n=1000, seed=0) -> ErrorTable:
        rng = np.random.default_rng(seed)
        inu, noise = rng.uniform(0, 2, n), rng.uniform(0, 2, n)
        ds, offset = rng.uniform(1, 6, n), rng.uniform(0, 100, n)
        errors = np.exp(-5.0 + 3.0 * noise + rng.normal(0, 0.5, n))
        return ErrorTable(
            row(e, inu=a, noise=b, ds=c, offset=d) for e, a, b, c, d in zip(errors, inu, noise, ds, offset)
        )

    def test_recovers_planted_coefficients(self):
        fit = loglinear_fit(self.planted())
        assert fit.n == 1000
        assert fit.intercept == pytest.approx(-5.0, abs=0.3)
        np.testing.assert_allclose([fit.inu, fit.noise, fit.ds, fit.offset], [0.0, 3.0, 0.0, 0.0], atol=0.1)
        assert fit.residual_variance == pytest.approx(0.25, rel=0.2)
        assert fit.coefficients.shape == (5,)

    def test_constant_regressor(self):
        table = ErrorTable(row(float(k + 1), noise=0.1 * k, ds=1.0 + k % 3, offset=float(k * k)) for k in range(20))
        with pytest.raises(RankDeficientError):
            loglinear_fit(table)

    def test_too_few_rows(self):
        table = ErrorTable(row(1.0, noise=float(k)) for k in range(9))
        with pytest.raises(ValueError, match="at least 10"):
            loglinear_fit(table)

    def test_selects_kind(self):
        table = self.planted(n=50)
        table.rows += [row(1.0, kind="r") for _ in range(5)]
        assert loglinear_fit(table, kind="t").n == 50
        with pytest.raises(ValueError):
            loglinear_fit(table, kind="r")


class TestCornerError:
    def cube(self) -> Volume:
        return Volume(np.zeros((2, 2, 2)), centred_world((2, 2, 2), (256.0, 256.0, 256.0)))

    def test_identical(self):
        m = rigid_from_euler([1, 2, 3], [4, 5, 6])
        assert corner_error(m, m, self.cube()) == (0.0, 0.0)

    def test_translation(self):
        median, worst = corner_error(rigid_from_euler([0, 2.0, 0], [0, 0, 0]), np.eye(4), self.cube())
        assert median == pytest.approx(2.0)
        assert worst == pytest.approx(2.0)

    def test_rotation_about_centre(self):
        axis = np.array([1.0, 1.0, 0.0]) / math.sqrt(2.0)
        rotation = np.eye(4)
        rotation[:3, :3] = Rotation.from_rotvec(math.radians(1.0) * axis).as_matrix()
        _, worst = corner_error(rotation, np.eye(4), self.cube())
        assert worst == pytest.approx(2.0 * math.sqrt(3.0) * 128.0 * math.sin(math.radians(0.5)), rel=1e-9)
        assert worst == pytest.approx(3.87, abs=0.01)


class TestErrorTable:
    def test_from_records(self):
        truth = log_se3(rigid_from_euler([10.0, -25.0, 5.0], [3.0, 0.0, -7.5]))
        estimate = log_se3(rigid_from_euler([0.5, 0, 0], [0, 0, 0]) @ exp_se3(truth))
        records = [record(0, truth, {"njtv": [[0.0] * 6, estimate.tolist()], "mi": [[0.0] * 6, truth.tolist()]})]
        table = table_from_records(records)
        assert len(table) == 2 * 3 * 2
        assert table.methods == ["mi", "njtv"]
        njtv = {(r.kind, r.axis): r for r in table.select(method="njtv").rows}
        assert njtv[("t", "x")].error == pytest.approx(0.5)
        assert njtv[("t", "y")].offset == pytest.approx(50.0)
        assert njtv[("r", "z")].offset == pytest.approx(50.0)
        assert njtv[("t", "x")].inu == pytest.approx(0.3)
        assert njtv[("t", "x")].ds == pytest.approx(3.0)
        assert table.select(method="mi").errors().max() < 1e-9

    def test_failed_method_gives_failure_rows(self):
        truth = log_se3(rigid_from_euler([10.0, 0.0, 0.0], [0.0, 0.0, 0.0]))
        r = record(0, truth, {"mi": [[0.0] * 6, truth.tolist()]})
        r.failures["njtv"] = "NoOverlapError: ..."
        table = table_from_records([r])
        assert table.methods == ["mi", "njtv"]
        failed = table.select(method="njtv")
        assert len(failed) == 6
        assert np.all(np.isinf(failed.errors()))
        assert {(row.kind, row.axis): row.offset for row in failed.rows}[("t", "x")] == pytest.approx(20.0)
        assert len(table.failed()) == 6
        assert len(table.succeeded()) == 6

    def test_failure_rows_survive_csv(self, tmp_path):
        table = ErrorTable([row(FAILED_ERROR), row(0.5, axis="y")])
        table.to_csv(tmp_path / "errors.csv")
        restored = ErrorTable.from_csv(tmp_path / "errors.csv")
        assert restored.rows == table.rows

    def test_csv_round_trip(self, tmp_path):
        table = ErrorTable([row(0.125), row(1 / 3, method="mi", kind="r", axis="z", trial=4)])
        table.to_csv(tmp_path / "errors.csv")
        restored = ErrorTable.from_csv(tmp_path / "errors.csv")
        assert restored.rows == table.rows

    def test_csv_header(self, tmp_path):
        table = ErrorTable([row(1.0)])
        table.to_csv(tmp_path / "errors.csv")
        assert (tmp_path / "errors.csv").read_text().splitlines()[0] == ",".join(ERROR_COLUMNS)

    @pytest.mark.parametrize(
        "content",
        [
            "a,b,c\n1,2,3\n",
            ",".join(ERROR_COLUMNS) + "\n0,njtv,1,t,x,abc,0,0,1,0\n",
            ",".join(ERROR_COLUMNS) + "\n0,njtv,1,q,x,1.0,0,0,1,0\n",
            ",".join(ERROR_COLUMNS) + "\n0,njtv,1,t,w,1.0,0,0,1,0\n",
            ",".join(ERROR_COLUMNS) + "\n0,njtv,1,t,x,-1.0,0,0,1,0\n",
            ",".join(ERROR_COLUMNS) + "\n0,njtv,1,t,x,nan,0,0,1,0\n",
            "",
        ],
    )
    def test_malformed_csv(self, tmp_path, content):
        path = tmp_path / "bad.csv"
        path.write_text(content)
        with pytest.raises(ValueError):
            ErrorTable.from_csv(path)


class TestSummarize:
    def table(self) -> ErrorTable:
        rows = []
        for trial in range(4):
            for axis in "xyz":
                rows.append(row(0.1, method="njtv", kind="t", axis=axis, trial=trial))
                rows.append(row(0.2, method="njtv", kind="r", axis=axis, trial=trial))
                rows.append(row(10.0, method="mi", kind="t", axis=axis, trial=trial))
                rows.append(row(0.2, method="mi", kind="r", axis=axis, trial=trial))
        return ErrorTable(rows)

    def test_per_method(self):
        summaries = {s.method: s for s in summarize(self.table())}
        assert list(summaries) == ["mi", "njtv"]
        njtv, mi = summaries["njtv"], summaries["mi"]
        assert njtv.n_rows == 24
        assert njtv.t_gmean == pytest.approx(0.1)
        assert njtv.t_gsd == pytest.approx(1.0)
        assert njtv.t_success == 1.0
        assert mi.t_success == 0.0
        assert mi.r_success == 1.0
        # the overall translation gmean is 1.0 (geometric midpoint of 0.1 and 10)
        assert njtv.t_normalised == pytest.approx(0.1)
        assert mi.t_normalised == pytest.approx(10.0)
        assert njtv.r_normalised == pytest.approx(1.0)

    def test_fit_absent_when_regressors_constant(self):
        assert all(s.fit is None for s in summarize(self.table()))

    def test_fit_present(self):
        table = TestLogLinearFit().planted(n=200)
        table.rows += [row(1.0, kind="r") for _ in range(3)]
        (summary,) = summarize(table)
        assert summary.fit is not None
        assert summary.to_dict()["fit"]["n"] == 200

    def test_empty(self):
        with pytest.raises(ValueError):
            summarize(ErrorTable())

    def test_failed_trial_counts_as_miss(self):
        truth = log_se3(rigid_from_euler([5.0, 0.0, 0.0], [0.0, 2.0, 0.0]))
        clean = record(0, truth, {"njtv": [[0.0] * 6, truth.tolist()]})
        failed = record(1, truth, {})
        failed.failures["njtv"] = "RuntimeError: boom"
        (summary,) = summarize(table_from_records([clean, failed]))
        assert summary.n_rows == 12
        assert summary.t_success == 0.5
        assert summary.r_success == 0.5
        assert summary.failed_trials == 1
        assert summary.t_gmean == pytest.approx(1e-6)

    def test_all_failed_gives_nan(self):
        table = self.table()
        table.rows += [row(FAILED_ERROR, method="ncc", kind=kind, axis=axis) for kind in "tr" for axis in "xyz"]
        summaries = {s.method: s for s in summarize(table)}
        ncc = summaries["ncc"]
        assert math.isnan(ncc.t_gmean)
        assert math.isnan(ncc.r_gsd)
        assert math.isnan(ncc.t_normalised)
        assert ncc.t_success == 0.0
        assert ncc.failed_trials == 1
        assert ncc.fit is None
        assert summaries["njtv"].t_normalised == pytest.approx(0.1)


class TestRenderReport:
    def test_render(self):
        summaries = summarize(TestSummarize().table())
        text = render_report(summaries, "{% for s in summaries %}{{ s.method }}:{{ '%.2f' % s.t_gmean }};{% endfor %}")
        assert text == "mi:10.00;njtv:0.10;"

    def test_extra_variables(self):
        assert render_report([], "{{ n_rows }} rows", n_rows=3) == "3 rows"

    def test_strict_undefined(self):
        with pytest.raises(UndefinedError):
            render_report([], "{{ missing_value }}")
