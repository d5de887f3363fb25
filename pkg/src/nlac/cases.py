"""Manufactured local solutions and their loads."""
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .assembly.load import LoadFunctional

PI = np.pi


@dataclass(frozen=True)
class ManufacturedCase:
    """A smooth local minimizer ``exact`` with the load that produces it."""

    name: str
    d: int
    p: float
    bc: str                 # "neumann" | "dirichlet"
    exact: Callable
    grad: Callable
    f0: Callable

    def load(self):
        return LoadFunctional(f0=self.f0)


def _cos1(X):
    return np.cos(PI * X[:, 0])


def _sin1(X):
    return np.sin(PI * X[:, 0])


def _cos2(X):
    return np.cos(PI * X[:, 0]) * np.cos(PI * X[:, 1])


def _sin2(X):
    return np.sin(PI * X[:, 0]) * np.sin(PI * X[:, 1])


CASES = {
    "neumann-cos": ManufacturedCase(
        "neumann-cos", 1, 2.0, "neumann", _cos1,
        lambda X: -PI * np.sin(PI * X[:, :1]),
        lambda X: PI**2 * np.cos(PI * X[:, 0])),
    # -(|u'|^2 u')' with u = cos(pi x)
    "neumann-cos-p4": ManufacturedCase(
        "neumann-cos-p4", 1, 4.0, "neumann", _cos1,
        lambda X: -PI * np.sin(PI * X[:, :1]),
        lambda X: 3.0 * PI**4 * np.sin(PI * X[:, 0]) ** 2 * np.cos(PI * X[:, 0])),
    "dirichlet-sin": ManufacturedCase(
        "dirichlet-sin", 1, 2.0, "dirichlet", _sin1,
        lambda X: PI * np.cos(PI * X[:, :1]),
        lambda X: PI**2 * np.sin(PI * X[:, 0])),
    "neumann-cos2d": ManufacturedCase(
        "neumann-cos2d", 2, 2.0, "neumann", _cos2,
        lambda X: -PI * np.stack([np.sin(PI * X[:, 0]) * np.cos(PI * X[:, 1]),
                                  np.cos(PI * X[:, 0]) * np.sin(PI * X[:, 1])], axis=1),
        lambda X: 2.0 * PI**2 * _cos2(X)),
    "dirichlet-sin2d": ManufacturedCase(
        "dirichlet-sin2d", 2, 2.0, "dirichlet", _sin2,
        lambda X: PI * np.stack([np.cos(PI * X[:, 0]) * np.sin(PI * X[:, 1]),
                                 np.sin(PI * X[:, 0]) * np.cos(PI * X[:, 1])], axis=1),
        lambda X: 2.0 * PI**2 * _sin2(X)),
}


def get_case(name):
    try:
        return CASES[name]
    except KeyError:
        raise ValueError(f"unknown manufactured case {name!r}; known: {sorted(CASES)}") from None
