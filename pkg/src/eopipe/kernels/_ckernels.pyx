# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: raster band math and columnar envelope filtering.

Semantics are identical to ``eopipe.kernels._pykernels``; no fast-math, so
floating results match the Python expressions bit for bit.
"""
from cpython.array cimport array, clone
from libc.math cimport isnan

cdef array _DOUBLE_TEMPLATE = array("d")


def ndvi(const double[:] red, const double[:] nir, double nodata):
    cdef Py_ssize_t n = red.shape[0], i
    if nir.shape[0] != n:
        raise ValueError("band length mismatch")
    cdef array out = clone(_DOUBLE_TEMPLATE, n, False)
    cdef double[:] o = out
    cdef double r, v, s
    for i in range(n):
        r = red[i]
        v = nir[i]
        if r == nodata or v == nodata:
            o[i] = nodata
            continue
        s = v + r
        if s == 0.0:
            o[i] = nodata
        else:
            o[i] = (v - r) / s
    return out


def classify(const double[:] values, double nodata, double t_water, double t_soil, double t_vegetation):
    cdef Py_ssize_t n = values.shape[0], i
    cdef array out = clone(_DOUBLE_TEMPLATE, n, False)
    cdef double[:] o = out
    cdef double v
    for i in range(n):
        v = values[i]
        if v == nodata:
            o[i] = nodata
        elif v < t_water:
            o[i] = 1.0
        elif v < t_soil:
            o[i] = 2.0
        elif v < t_vegetation:
            o[i] = 3.0
        else:
            o[i] = 4.0
    return out


def equal_mask(const double[:] values, double nodata, double target):
    cdef Py_ssize_t n = values.shape[0], i
    cdef array out = clone(_DOUBLE_TEMPLATE, n, False)
    cdef double[:] o = out
    cdef double v
    for i in range(n):
        v = values[i]
        if v == nodata:
            o[i] = nodata
        elif v == target:
            o[i] = 1.0
        else:
            o[i] = 0.0
    return out


def match_rows(
    Py_ssize_t count,
    const int[:] source, const int[:] satellite, const int[:] collection, const int[:] level,
    const long long[:] sensing_ms,
    const double[:] min_lon, const double[:] min_lat, const double[:] max_lon, const double[:] max_lat,
    const double[:] cloud,
    int q_source, bint q_copernicus, int q_satellite, double q_max_cloud, int q_level,
    int q_collection, long long q_start_ms, long long q_end_ms,
    double q_min_lon, double q_min_lat, double q_max_lon, double q_max_lat,
):
    cdef Py_ssize_t i
    cdef double c
    cdef bint check_cloud = not isnan(q_max_cloud)
    hits = []
    for i in range(count):
        if source[i] != q_source:
            continue
        if q_copernicus:
            if satellite[i] != q_satellite:
                continue
            if check_cloud:
                c = cloud[i]
                if isnan(c) or c > q_max_cloud:
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
