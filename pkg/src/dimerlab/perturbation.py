"""First-order response of dimer cumulants to the plaquette coupling.

With alpha = e^lambda - 1 the Boltzmann factor is (1 + alpha)^W and

    d/d alpha <O_1; ...; O_k>  at alpha = 0
        = sum over faces P of <O_1; ...; O_k; N_P>   (all truncated, free)

where N_P = 1_{h1} 1_{h2} + 1_{v1} 1_{v2} is the parallel-pair indicator of
face P, a sum of two product observables that enter the cumulant one at a
time by multilinearity.  On the torus the face sum is complete.  In infinite
volume it is truncated to |P|_inf <= R; the staggered signs make successive
square-shell contributions alternate with decreasing magnitude, so the
neglected tail is bounded by the magnitude of the outermost net shell
(alternating-series remainder).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .freecorr import (FiniteCorrelator, MAX_CUMULANT_ORDER, dimer_cumulant,
                       dimer_moment)
from .kasteleyn import InfinitePropagator


def plaquette_pair_observables(face):
    """The two parallel-pair product observables of a face, in bond form."""
    p1, p2 = int(face[0]), int(face[1])
    hpair = [((p1, p2), 1), ((p1, p2 + 1), 1)]
    vpair = [((p1, p2), 2), ((p1 + 1, p2), 2)]
    return hpair, vpair


@dataclass(frozen=True)
class FirstOrderResult:
    """Derivative value plus the truncation-tail estimate (zero on the torus)."""
    value: float
    tail: float


def first_order_cumulant(groups, prop, R: int = 24) -> FirstOrderResult:
    """d/d alpha at alpha = 0 of the joint cumulant of product observables.

    groups: list of observables, each a list of bonds ((x1, x2), j).
    prop: FiniteCorrelator (full torus sum) or InfinitePropagator
    (faces |P|_inf <= R, with a tail estimate in the result).
    """
    if len(groups) + 1 > MAX_CUMULANT_ORDER:
        raise ValueError("insertion would exceed the cumulant order cap")

    def insertion(face) -> float:
        hpair, vpair = plaquette_pair_observables(face)
        return (dimer_cumulant(list(groups) + [hpair], prop)
                + dimer_cumulant(list(groups) + [vpair], prop))

    if isinstance(prop, FiniteCorrelator):
        total = 0.0
        for s in range(prop.lat.n_sites):
            total += insertion(prop.lat.coords[s])
        return FirstOrderResult(total, 0.0)

    if not isinstance(prop, InfinitePropagator):
        raise TypeError("prop must be FiniteCorrelator or InfinitePropagator")

    total = 0.0
    shell_net = 0.0
    for p1 in range(-R, R + 1):
        for p2 in range(-R, R + 1):
            term = insertion((p1, p2))
            total += term
            if max(abs(p1), abs(p2)) == R:
                shell_net += term
    return FirstOrderResult(total, abs(shell_net))
