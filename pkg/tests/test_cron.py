import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import utc
from eopipe.cron import CronError, CronPattern, NoFireWithinHorizon, next_fire_time
from generators import random_instant, random_pattern
from oracles import cron_oracle_next

# computed once with oracles.cron_oracle_next and frozen
SAMPLE_NEXT = utc(2020, 8, 1, 0, 0)


def test_sample_job_next_fire():
    after = utc(2020, 7, 7, 12, 3, 26)
    assert next_fire_time("0 0 1 * *", after) == SAMPLE_NEXT
    assert cron_oracle_next("0 0 1 * *", after) == SAMPLE_NEXT


def test_every_minute_is_next_minute():
    after = utc(2021, 3, 4, 5, 6, 59)
    assert next_fire_time("* * * * *", after) == utc(2021, 3, 4, 5, 7)
    assert next_fire_time("* * * * *", utc(2021, 3, 4, 5, 6)) == utc(2021, 3, 4, 5, 7)


def test_impossible_date_never_fires():
    with pytest.raises(NoFireWithinHorizon):
        next_fire_time("0 0 30 2 *", utc(2020, 1, 1))


def test_leap_day_fires_within_horizon():
    assert next_fire_time("0 12 29 2 *", utc(2021, 3, 1)) == utc(2024, 2, 29, 12, 0)


def test_dom_dow_or_when_both_restricted():
    # 2020-08-01 is a Saturday; Monday 2020-08-03 comes before the 15th
    assert next_fire_time("0 0 15 * 1", utc(2020, 8, 1)) == utc(2020, 8, 3)
    # only day-of-week restricted: AND through the unrestricted field
    assert next_fire_time("0 0 * * 0", utc(2020, 8, 1)) == utc(2020, 8, 2)


def test_restricted_means_not_full_range():
    assert not CronPattern.parse("0 0 1-31 * *").days_restricted
    assert not CronPattern.parse("0 0 * * 0-6").weekdays_restricted
    assert CronPattern.parse("0 0 */2 * *").days_restricted


@pytest.mark.parametrize("bad", [
    "61 0 1 * *", "0 24 * * *", "0 0 0 * *", "0 0 1 13 *", "0 0 * * 7", "* * * *",
    "*/0 * * * *", "5-1 * * * *", "a * * * *", "1,,2 * * * *", "3/2 * * * *",
])
def test_rejects_bad_patterns(bad):
    with pytest.raises(CronError):
        CronPattern.parse(bad)


def test_parse_forms():
    p = CronPattern.parse("*/15 1-3,22 1,15 */6 1-5/2")
    assert p.minutes == {0, 15, 30, 45}
    assert p.hours == {1, 2, 3, 22}
    assert p.days == {1, 15}
    assert p.months == {1, 7}
    assert p.weekdays == {1, 3, 5}


def check_against_oracle(pattern: str, after) -> None:
    expected = cron_oracle_next(pattern, after)
    if expected is None:
        with pytest.raises(NoFireWithinHorizon):
            next_fire_time(pattern, after)
    else:
        assert next_fire_time(pattern, after) == expected, (pattern, after)


def test_oracle_equivalence_sample():
    rng = random.Random(7)
    for _ in range(30):
        pattern = random_pattern(rng)
        for _ in range(10):
            check_against_oracle(pattern, random_instant(rng))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_oracle_equivalence_property(seed):
    rng = random.Random(seed)
    check_against_oracle(random_pattern(rng), random_instant(rng))


def test_result_is_strictly_after_and_aligned():
    rng = random.Random(11)
    for _ in range(200):
        pattern = random_pattern(rng)
        after = random_instant(rng)
        t = next_fire_time(pattern, after)
        assert t > after and t.second == 0 and t.microsecond == 0
        assert CronPattern.parse(pattern).matches(t)
