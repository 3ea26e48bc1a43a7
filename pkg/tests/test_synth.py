"""
Test planted-pattern generation
"""
import numpy as np
import pytest
from scipy import stats

from timelyrec import calendar, synth
from timelyrec.data import load_interactions
from timelyrec.errors import InputError
from timelyrec.yaml import loads


def planted_rows(frame, truth):
    """Rows whose item is one of the user's favourites, with decomposed slots"""
    for user, item, t in frame.itertuples(index=False):
        prefs = truth["users"][user].get(item)
        if prefs is not None:
            yield prefs, calendar.decompose(t)


def test_no_jitter_hits_preferred_slots():
    spec = synth.SyntheticSpec(n_users=5, n_items=10, interactions_per_user=40, jitter=0)
    frame, truth = synth.generate(spec)
    assert len(frame) == 200
    for prefs, fields in planted_rows(frame, truth):
        assert fields.hour == prefs["hour"][0]
        assert fields.day_of_week == prefs["day_of_week"][0]


@pytest.mark.parametrize(
    "start", [synth.FIRST_MONDAY, synth.DEFAULT_START + 5 * synth.SECONDS_PER_WEEK]
)
def test_planted_slots_match_calendar(start):
    spec = synth.SyntheticSpec(
        n_users=5, n_items=10, interactions_per_user=50, jitter=0, start=start
    )
    frame, truth = synth.generate(spec)
    for prefs, fields in planted_rows(frame, truth):
        assert (fields.day_of_week, fields.hour) == (
            prefs["day_of_week"][0],
            prefs["hour"][0],
        )


def test_jitter_stays_in_window():
    spec = synth.SyntheticSpec(n_users=5, n_items=10, interactions_per_user=40, jitter=1)
    frame, truth = synth.generate(spec)
    for prefs, fields in planted_rows(frame, truth):
        hour = prefs["hour"][0]
        assert fields.hour in {(hour - 1) % 24, hour, (hour + 1) % 24}


def test_hours_follow_planted_distribution():
    spec = synth.SyntheticSpec(
        n_users=1, n_items=3, interactions_per_user=3000, favorites=1, jitter=2, seed=5
    )
    frame, truth = synth.generate(spec)
    prefs = truth["users"]["u0"]
    (item,) = prefs
    expected = synth.planted_distribution(prefs[item]["hour"], "hour", 2)
    hours = calendar.decompose_many(frame["timestamp"].to_numpy())["hour"]
    observed = np.bincount(hours, minlength=24)
    support = expected > 0
    assert observed[~support].sum() == 0
    result = stats.chisquare(observed[support], expected[support] * len(frame))
    assert result.pvalue > 0.001


def test_planted_distribution():
    probs = synth.planted_distribution([0], "day_of_week", 1)
    assert probs.tolist() == pytest.approx([1 / 3, 1 / 3, 0, 0, 0, 0, 1 / 3])


def test_generate_is_deterministic():
    spec = synth.SyntheticSpec(n_users=4, n_items=8, interactions_per_user=10)
    first, truth = synth.generate(spec)
    again, truth_again = synth.generate(spec)
    assert first.equals(again)
    assert truth == truth_again


def test_trends():
    spec = synth.SyntheticSpec(
        n_users=10, n_items=20, interactions_per_user=30, n_trends=2, trend_share=0.5
    )
    frame, truth = synth.generate(spec)
    onsets = {t["item"]: t["onset"] for t in truth["trends"]}
    assert len(onsets) == 2
    end = spec.start + spec.weeks * 7 * 86400
    trend_rows = frame[frame["item"].isin(onsets)]
    assert len(trend_rows) > 0
    assert (trend_rows["timestamp"] < end).all()
    assert any(t >= onsets[item] for item, t in zip(trend_rows["item"], trend_rows["timestamp"]))


@pytest.mark.parametrize(
    "settings",
    [
        {"granularities": ("month",)},
        {"favorites": 0},
        {"favorites": 101},
        {"jitter": 12},
        {"jitter": 4, "granularities": ("day_of_week",)},
        {"preferred_slots": 8, "granularities": ("day_of_week",)},
        {"n_trends": 1, "trend_share": 1.0},
        {"weeks": 0},
        {"start": 0},
        {"start": synth.DEFAULT_START + 3600},
    ],
)
def test_infeasible_spec(settings):
    with pytest.raises(InputError):
        synth.SyntheticSpec(**settings)


def test_write_synthetic(tmpdir):
    path = str(tmpdir.join("synthetic.tsv"))
    spec = synth.SyntheticSpec(n_users=3, n_items=6, interactions_per_user=5)
    frame, truth = synth.write_synthetic(spec, path)
    dataset = load_interactions(path)
    assert len(dataset) == 15
    assert dataset.n_users == 3
    with open(synth.truth_path(path), encoding="utf-8") as f:
        saved = loads(f.read())
    assert saved["spec"] == spec.to_dict()
    assert set(saved["users"]) == {"u0", "u1", "u2"}
