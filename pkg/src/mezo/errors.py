"""Exception types shared across the package."""

from __future__ import annotations


class NumericalError(RuntimeError):
    """An estimator or solver could not produce a trustworthy number."""


class DefectiveMatrixError(NumericalError):
    """The growth matrix has no complete eigenbasis; use numerical integration."""


class ScenarioError(ValueError):
    """A scenario failed validation. ``problems`` lists every issue found."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems) if self.problems else "invalid scenario")
