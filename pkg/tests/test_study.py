import numpy as np
import pytest

from jnetgait.errors import ConfigError, FormatError
from jnetgait.ingest import SubjectMeta
from jnetgait.study import (
    DIURNAL,
    StudyConfig,
    list_subject_data,
    load_subject_data,
    prepare_subject,
    required_strategies,
    run_cv,
    save_subject_data,
    synth_cohort,
    synth_daily,
)
from jnetgait.windowing import EdgeStrategy


@pytest.fixture(scope="module")
def cohort():
    return synth_cohort(n_hd=4, n_hc=2, duration_s=90, seed=1)


def test_cohort_composition(cohort):
    ids = [s.subject_id for s in cohort]
    assert ids == ["hd01", "hd02", "hd03", "hd04", "hc01", "hc02"]
    hd = [s for s in cohort if s.meta.cohort == "HD"]
    levels = [max(iv.chorea for iv in s.annotations.intervals) for s in hd]
    assert levels == [1, 2, 3, 4]
    tms = [s.meta.uhdrs_tms for s in hd]
    assert tms == sorted(tms)
    assert all(s.meta.uhdrs_tms is None for s in cohort if s.meta.cohort == "HC")


def test_subject_data_round_trip(cohort, tmp_path):
    sd = prepare_subject(cohort[0])
    save_subject_data(sd, tmp_path)
    assert list_subject_data(tmp_path) == ["hd01"]
    back = load_subject_data(tmp_path, "hd01")
    assert back.cohort == "HD" and back.n_samples == sd.n_samples
    np.testing.assert_array_equal(back.labels.gait, sd.labels.gait)
    assert set(back.segmentation) == set(EdgeStrategy)
    for s, ws in sd.segmentation.items():
        np.testing.assert_array_equal(back.segmentation[s].start_index, ws.start_index)
        np.testing.assert_array_equal(back.segmentation[s].active, ws.active)
    with pytest.raises(FormatError):
        load_subject_data(tmp_path, "nobody")


def test_required_strategies_adds_triple_for_multitask():
    assert required_strategies(StudyConfig(strategies=("plain",), multitask=True)) == (EdgeStrategy.PLAIN,
                                                                                     EdgeStrategy.TRIPLE)
    assert required_strategies(StudyConfig(strategies=("plain",), multitask=False)) == (EdgeStrategy.PLAIN,)


def test_run_cv_rejects_missing_strategy(cohort):
    data = {s.subject_id: prepare_subject(s, (EdgeStrategy.PLAIN,)) for s in cohort}
    with pytest.raises(ConfigError):
        run_cv(data, StudyConfig(k_folds=2, strategies=("triple",)))


def test_run_cv_small(cohort):
    data = {s.subject_id: prepare_subject(s, (EdgeStrategy.PLAIN,)) for s in cohort}
    cfg = StudyConfig(k_folds=2, strategies=("plain",), multitask=False, hc_only_baseline=True, epochs=2,
                      stage_channels=[4, 4, 8, 8, 8], kernel_size=3)
    res = run_cv(data, cfg)
    assert set(res.report.results) == {"baseline", "baseline_hc_only", "jnet_plain"}
    assert sorted(x for f in res.folds for x in f) == sorted(data)
    assert all(len(h) == 2 for h in res.histories["jnet_plain"])
    # baseline scores are per window, J-Net scores per sample
    assert res.report.get("jnet_plain").n > 10 * res.report.get("baseline").n


def test_synth_daily_follows_diurnal_profile():
    meta = SubjectMeta("hc01", "HC")
    rec = synth_daily(meta, hours=3, start_epoch=1_700_006_400.0 + 3 * 3600, fs=30.0, seed=2)
    assert rec.samples.shape == (3 * 3600 * 30, 3)
    assert DIURNAL[3] == 0.0
    # night hours carry no walking, so the magnitude stays close to 1 g
    mag = np.linalg.norm(rec.samples, axis=1)
    assert abs(np.median(mag) - 1.0) < 0.1


def test_synth_daily_partial_hour_alignment():
    meta = SubjectMeta("hd01", "HD", 40)
    start = 1_700_006_400.0 + 8.5 * 3600
    rec = synth_daily(meta, hours=1.25, start_epoch=start, fs=30.0, seed=0)
    assert len(rec) == int(1.25 * 3600 * 30) and rec.start_epoch == start
    with pytest.raises(ConfigError):
        synth_daily(meta, hours=0)
