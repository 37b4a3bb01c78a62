import dataclasses
import json
import math
from importlib import resources

import jsonschema
import numpy as np
import pytest

from latticeclt import experiment
from latticeclt.constants import sigma_c_sq, sigma_u_sq
from latticeclt.experiment import (
    ExperimentAborted,
    ExperimentConfig,
    TrendPoint,
    assess_reproduction,
    clt_experiment,
    predicted_variance,
)
from latticeclt.geometry import volume_omega_T
from latticeclt.lattices import EnumerationCapError

SCHEMA = json.loads(resources.files("latticeclt").joinpath("schemas/clt_summary.schema.json").read_text())


@pytest.fixture(scope="module")
def small_run():
    return clt_experiment(ExperimentConfig(kind="affine", M=32, n_samples=40, master_seed=5))


class TestConfig:
    def test_dimension_guard(self):
        with pytest.raises(ValueError, match="allow_small_l"):
            ExperimentConfig(m=1, n=2, u=(2.0,))
        assert ExperimentConfig(m=1, n=2, u=(2.0,), allow_small_l=True).l == 3

    @pytest.mark.parametrize(
        "kw", [{"u": (3.0,)}, {"M": 0}, {"n_samples": 0}, {"workers": 0}, {"r_max": 9}, {"kind": "congruence"}]
    )
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            ExperimentConfig(**kw)

    def test_serialises(self):
        d = ExperimentConfig(kind="congruence", cong=((1, 0, 0, 0, 0), 2)).to_dict()
        assert d["kind"] == "congruence" and d["cong"] == [[1, 0, 0, 0, 0], 2]
        json.dumps(d)


class TestPredictedVariance:
    def test_values(self):
        assert predicted_variance("affine", 5) == 1.0
        assert predicted_variance("unimodular", 5) == sigma_u_sq(5)
        assert predicted_variance("congruence", 5, 2) == sigma_c_sq(5, 2)

    def test_config_routes_modulus(self):
        res = clt_experiment(ExperimentConfig(kind="congruence", cong=((1, 0, 0, 0, 0), 3), M=1, n_samples=3))
        assert res.predicted_variance == sigma_c_sq(5, 3)
        assert "sigma_c_sq_rogers" in res.alternative_variances


class TestRun:
    def test_smoke(self):
        res = clt_experiment(ExperimentConfig(kind="affine", M=1, n_samples=10))
        assert len(res.records) == 10 and res.predicted_variance == 1.0
        assert [r.index for r in res.records] == list(range(10))

    def test_record_normalisation(self, small_run):
        vol = 32 * volume_omega_T(small_run.config.params, 2.0)
        for r in small_run.records:
            assert r.volume == vol
            assert r.normalized_discrepancy == (r.count - vol) / math.sqrt(vol)

    def test_trend_heights(self, small_run):
        assert [t.M for t in small_run.trend] == [16, 32]
        assert small_run.trend[-1].variance == pytest.approx(small_run.report.variance, rel=1e-12)

    def test_prefix_trend_matches_shorter_run(self, small_run):
        short = clt_experiment(dataclasses.replace(small_run.config, M=16))
        assert small_run.trend[0].variance == pytest.approx(short.report.variance, rel=1e-12)
        assert small_run.trend[0].ks == pytest.approx(short.ks, rel=1e-12)

    def test_workers_do_not_change_results(self):
        cfg = ExperimentConfig(kind="unimodular", M=6, n_samples=24, master_seed=9)
        one = clt_experiment(cfg)
        two = clt_experiment(dataclasses.replace(cfg, workers=2))
        assert one.records == two.records

    def test_repeatable(self):
        cfg = ExperimentConfig(kind="congruence", cong=((0, 1, 0, 0, 0), 2), M=3, n_samples=8, master_seed=4)
        assert clt_experiment(cfg).records == clt_experiment(cfg).records

    def test_on_record_callback(self):
        seen = []
        clt_experiment(ExperimentConfig(M=2, n_samples=5), on_record=seen.append)
        assert [r.index for r in seen] == list(range(5))

    def test_summary_validates(self, small_run):
        summary = json.loads(json.dumps(small_run.summary()))
        jsonschema.validate(summary, SCHEMA)
        assert summary["predicted_variance"] == 1.0

    def test_abort_keeps_completed_records(self, monkeypatch):
        real = experiment.shell_counts

        def flaky(lat, params, M, **kw):
            if flaky.calls == 3:
                raise EnumerationCapError("too many nodes")
            flaky.calls += 1
            return real(lat, params, M, **kw)

        flaky.calls = 0
        monkeypatch.setattr(experiment, "shell_counts", flaky)
        with pytest.raises(ExperimentAborted) as info:
            clt_experiment(ExperimentConfig(M=2, n_samples=10))
        assert [r.index for r in info.value.records] == [0, 1, 2]


def _with(result, *, ks_pvalue=None, trend=None, variance=None):
    rep = result.report
    if variance is not None:
        rep = dataclasses.replace(rep, variance=variance)
    return dataclasses.replace(
        result,
        report=rep,
        ks_pvalue=result.ks_pvalue if ks_pvalue is None else ks_pvalue,
        trend=result.trend if trend is None else trend,
    )


def _trend(ks_values):
    return tuple(TrendPoint(16 * 2**i, 1.0, ks, 0.5, 0.0, {3: 0.0, 4: 0.0}) for i, ks in enumerate(ks_values))


class TestVerdict:
    def test_pass(self, small_run):
        res = _with(small_run, ks_pvalue=0.5, variance=1.0, trend=_trend([0.1, 0.05]))
        res = dataclasses.replace(res, report=dataclasses.replace(res.report, cumulants={3: (0.0, 1.0), 4: (0.0, 1.0)}))
        assert assess_reproduction(res).status == "pass"

    def test_trend_rescues_only_improving_checks(self, small_run):
        base = dataclasses.replace(
            small_run, report=dataclasses.replace(small_run.report, variance=1.0, cumulants={3: (0.0, 1.0), 4: (0.0, 1.0)})
        )
        improving = _with(base, ks_pvalue=1e-6, trend=_trend([0.2, 0.1]))
        worsening = _with(base, ks_pvalue=1e-6, trend=_trend([0.1, 0.2]))
        assert assess_reproduction(improving).status == "trend"
        assert assess_reproduction(worsening).status == "fail"
        assert not assess_reproduction(worsening).accepted

    def test_single_height_cannot_trend(self, small_run):
        res = _with(small_run, ks_pvalue=1e-6, trend=_trend([0.2]))
        assert assess_reproduction(res).status == "fail"

    def test_variance_tolerance(self, small_run):
        res = _with(small_run, variance=1.3, trend=_trend([0.1]))
        assert assess_reproduction(res).checks["variance"] is False
