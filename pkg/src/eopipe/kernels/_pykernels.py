"""Pure-Python twins of the compiled kernels in ``_ckernels.pyx``."""

from __future__ import annotations

import math
from array import array


def ndvi(red, nir, nodata: float) -> array:
    if len(red) != len(nir):
        raise ValueError("band length mismatch")
    out = array("d", bytes(8 * len(red)))
    for i, (r, v) in enumerate(zip(red, nir)):
        if r == nodata or v == nodata:
            out[i] = nodata
            continue
        s = v + r
        out[i] = nodata if s == 0.0 else (v - r) / s
    return out


def classify(values, nodata: float, t_water: float, t_soil: float, t_vegetation: float) -> array:
    out = array("d", bytes(8 * len(values)))
    for i, v in enumerate(values):
        if v == nodata:
            out[i] = nodata
        elif v < t_water:
            out[i] = 1.0
        elif v < t_soil:
            out[i] = 2.0
        elif v < t_vegetation:
            out[i] = 3.0
        else:
            out[i] = 4.0
    return out


def equal_mask(values, nodata: float, target: float) -> array:
    out = array("d", bytes(8 * len(values)))
    for i, v in enumerate(values):
        if v == nodata:
            out[i] = nodata
        else:
            out[i] = 1.0 if v == target else 0.0
    return out


def match_rows(
    count, source, satellite, collection, level, sensing_ms,
    min_lon, min_lat, max_lon, max_lat, cloud,
    q_source, q_copernicus, q_satellite, q_max_cloud, q_level,
    q_collection, q_start_ms, q_end_ms,
    q_min_lon, q_min_lat, q_max_lon, q_max_lat,
) -> list[int]:
    check_cloud = not math.isnan(q_max_cloud)
    hits = []
    for i in range(count):
        if source[i] != q_source:
            continue
        if q_copernicus:
            if satellite[i] != q_satellite:
                continue
            if check_cloud:
                c = cloud[i]
                if math.isnan(c) or c > q_max_cloud:
                    continue
            if q_level != -1 and level[i] != q_level:
                continue
        elif collection[i] != q_collection:
            continue
        if sensing_ms[i] < q_start_ms or sensing_ms[i] > q_end_ms:
            continue
        if min_lon[i] > q_max_lon or q_min_lon > max_lon[i]:
            continue
        if min_lat[i] > q_max_lat or q_min_lat > max_lat[i]:
            continue
        hits.append(i)
    return hits
