"""The three problem cases and the tags used for them in fields and measures."""
from __future__ import annotations

from enum import Enum


class Case(str, Enum):
    EVOLUTIVE_DISCOUNTED = "evolutive_discounted"  # t < inf, lambda > 0
    STATIONARY_DISCOUNTED = "stationary_discounted"  # t = inf, lambda > 0
    EVOLUTIVE_UNDISCOUNTED = "evolutive_undiscounted"  # t < inf, lambda = 0

    @property
    def number(self) -> int:
        return _NUMBERS[self]

    @property
    def measure_tag(self) -> str:
        return _MEASURE_TAGS[self]

    @property
    def discounted(self) -> bool:
        return self is not Case.EVOLUTIVE_UNDISCOUNTED

    @property
    def finite_horizon(self) -> bool:
        return self is not Case.STATIONARY_DISCOUNTED

    @classmethod
    def parse(cls, value) -> "Case":
        """Accept a Case, its field tag, its measure tag, or the case number 1/2/3."""
        if isinstance(value, Case):
            return value
        if isinstance(value, int) and not isinstance(value, bool):
            for case, num in _NUMBERS.items():
                if num == value:
                    return case
            raise ValueError(f"case number must be 1, 2 or 3, got {value}")
        text = str(value).strip().lower()
        for case in cls:
            if text in (case.value, _MEASURE_TAGS[case], f"case{_NUMBERS[case]}", str(_NUMBERS[case])):
                return case
        raise ValueError(f"unknown case tag {value!r}")


_NUMBERS = {
    Case.EVOLUTIVE_DISCOUNTED: 1,
    Case.STATIONARY_DISCOUNTED: 2,
    Case.EVOLUTIVE_UNDISCOUNTED: 3,
}

_MEASURE_TAGS = {
    Case.EVOLUTIVE_DISCOUNTED: "finite_discounted",
    Case.STATIONARY_DISCOUNTED: "infinite_discounted",
    Case.EVOLUTIVE_UNDISCOUNTED: "time_average",
}
