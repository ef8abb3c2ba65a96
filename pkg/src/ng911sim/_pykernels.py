"""Pure-Python kernels. Same algorithms, same results as the compiled core."""

from __future__ import annotations

import heapq

import numpy as np


def mmc_waits(interarrival, work, mu, c, capacity=-1):
    """FIFO ``c``-server queue driven by pre-drawn inputs.

    ``work`` holds unit exponentials; service time is ``work / mu``.
    ``capacity`` is the waiting room (-1 unbounded, 0 loss system). Returns
    per-arrival waits (-1.0 for a dropped arrival) and the drop count.
    """
    n = len(interarrival)
    waits = np.empty(n)
    free = [0.0] * c  # heap of server free times
    starts = []  # service starts of accepted arrivals, nondecreasing
    head = 0
    t = 0.0
    dropped = 0
    for i in range(n):
        t += interarrival[i]
        while head < len(starts) and starts[head] <= t:
            head += 1
        if free[0] > t and capacity >= 0 and len(starts) - head >= capacity:
            waits[i] = -1.0
            dropped += 1
            continue
        s = free[0] if free[0] > t else t
        heapq.heapreplace(free, s + work[i] / mu)
        starts.append(s)
        waits[i] = s - t
    return waits, dropped


def hypercube_loss(interarrival, atom, work, pref, mu):
    """Loss-mode fleet: each request takes its first free preferred vehicle.

    Returns the time spent in every busy bitmask, the lost count and the
    total time simulated.
    """
    n = pref.shape[1]
    free = [0.0] * n
    occ = np.zeros(1 << n)
    mask = 0
    t = 0.0
    last = 0.0
    lost = 0
    for i in range(len(interarrival)):
        t += interarrival[i]
        # drain completions up to t in time order
        while mask:
            v = -1
            best = t
            for k in range(n):
                if mask >> k & 1 and free[k] <= best:
                    if v < 0 or free[k] < best:
                        v, best = k, free[k]
            if v < 0:
                break
            occ[mask] += best - last
            last = best
            mask &= ~(1 << v)
        occ[mask] += t - last
        last = t
        row = pref[atom[i]]
        for j in range(n):
            v = row[j]
            if not mask >> v & 1:
                mask |= 1 << v
                free[v] = t + work[i] / mu[v]
                break
        else:
            lost += 1
    return occ, lost, t
