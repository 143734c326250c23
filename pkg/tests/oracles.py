"""Independent brute-force reference implementations used as test oracles.

Nothing here imports the package's own cron, matching or kernel code.
"""

from __future__ import annotations

from datetime import datetime, timedelta, timezone

# ------------------------------------------------------------------- cron

_RANGES = [(0, 59), (0, 23), (1, 31), (1, 12), (0, 6)]
ORACLE_HORIZON_DAYS = 1827


def _element_admits(element: str, v: int, lo: int, hi: int) -> bool:
    if "/" in element:
        base, step = element.split("/")
        step = int(step)
    else:
        base, step = element, 1
    if base == "*":
        a, b = lo, hi
    elif "-" in base:
        a, b = (int(x) for x in base.split("-"))
    else:
        a = b = int(base)
    return a <= v <= b and (v - a) % step == 0


def _admits(field: str, v: int, lo: int, hi: int) -> bool:
    return any(_element_admits(e, v, lo, hi) for e in field.split(","))


def _full(field: str, lo: int, hi: int) -> bool:
    return all(_admits(field, v, lo, hi) for v in range(lo, hi + 1))


def cron_oracle_next(pattern: str, after: datetime) -> datetime | None:
    """Scan minute by minute; a day failing the date fields is skipped whole."""
    minute, hour, dom, month, dow = pattern.split()
    dom_full = _full(dom, 1, 31)
    dow_full = _full(dow, 0, 6)

    def day_ok(t: datetime) -> bool:
        if not _admits(month, t.month, 1, 12):
            return False
        d = _admits(dom, t.day, 1, 31)
        w = _admits(dow, (t.weekday() + 1) % 7, 0, 6)
        if not dom_full and not dow_full:
            return d or w
        return d and w

    t = after.astimezone(timezone.utc).replace(second=0, microsecond=0) + timedelta(minutes=1)
    end = after + timedelta(days=ORACLE_HORIZON_DAYS)
    while t <= end:
        if not day_ok(t):
            t = (t + timedelta(days=1)).replace(hour=0, minute=0)
            continue
        if _admits(hour, t.hour, 0, 23) and _admits(minute, t.minute, 0, 59):
            return t
        t += timedelta(minutes=1)
    return None


# --------------------------------------------------------------- matching


def brute_force_match(envelopes: list[dict], query: dict) -> list[str]:
    """Envelope ids satisfying every constraint, straight from the dict forms."""
    subset = query["subset"]
    w0, w1 = query["window"]
    a = query["aoi"]
    level = query.get("level")
    out = []
    for e in envelopes:
        if e["sourceType"] != subset["sourceType"]:
            continue
        if subset["sourceType"] == "CopernicusSubsetDefinition":
            if e.get("satellite") != subset["satellite"]:
                continue
            cap = subset.get("maximumCloudCoverage")
            if cap is not None and (e.get("cloudCoverage") is None or not e["cloudCoverage"] <= cap):
                continue
            if level is not None and e.get("processingLevel") != level:
                continue
        elif e.get("productCollection") != subset["productCollection"]:
            continue
        if not (w0 <= e["sensingTime"] <= w1):
            continue
        b = e["footprint"]
        if b[0] > a[2] or a[0] > b[2] or b[1] > a[3] or a[1] > b[3]:
            continue
        out.append(e["envelopeId"])
    return out


# ------------------------------------------------------------- band math


def ndvi_scalar(red: float, nir: float, nodata: float) -> float:
    if red == nodata or nir == nodata or nir + red == 0:
        return nodata
    return (nir - red) / (nir + red)


def class_histogram(values, nodata, thresholds=(0.0, 0.2, 0.5)) -> dict:
    counts = {1: 0, 2: 0, 3: 0, 4: 0, "nodata": 0}
    tw, ts, tv = thresholds
    for v in values:
        if v == nodata:
            counts["nodata"] += 1
        elif v < tw:
            counts[1] += 1
        elif v < ts:
            counts[2] += 1
        elif v < tv:
            counts[3] += 1
        else:
            counts[4] += 1
    return counts


# ---------------------------------------------------------------- topics


def topic_oracle(pattern: list[str], key: list[str]) -> bool:
    if not pattern:
        return not key
    head, rest = pattern[0], pattern[1:]
    if head == "#":
        return any(topic_oracle(rest, key[i:]) for i in range(len(key) + 1))
    if not key:
        return False
    return (head == "*" or head == key[0]) and topic_oracle(rest, key[1:])
