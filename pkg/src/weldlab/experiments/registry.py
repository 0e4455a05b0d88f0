"""Name -> experiment lookup."""

from __future__ import annotations

from weldlab.experiments.basic import GMC, LOEWNER, UI
from weldlab.experiments.bessel import RN, WILLIAMS
from weldlab.experiments.core import Experiment, UnknownExperiment
from weldlab.experiments.coupled import COUPLED, POINTS, RATIO, ZIPPER
from weldlab.experiments.flows import FLOWS
from weldlab.experiments.rooted import ROOTED, ZOOM
from weldlab.experiments.welds import INTERFACE, WELD, ZIPUP

REGISTRY: dict[str, Experiment] = {e.name: e for e in (
    GMC, RATIO, LOEWNER, FLOWS, RN, WILLIAMS, ZOOM, WELD, INTERFACE, ZIPUP, COUPLED,
    POINTS, ROOTED, UI, ZIPPER,
)}


def names() -> list[str]:
    return sorted(REGISTRY)


def get(name: str) -> Experiment:
    try:
        return REGISTRY[name]
    except KeyError:
        raise UnknownExperiment(name, names()) from None
