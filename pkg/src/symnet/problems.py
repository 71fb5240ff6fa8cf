"""Built-in ground-truth benchmark corpus.

Sampling intervals follow community conventions per family (documented here,
overridable in suite configs, and printed into every report): polynomial and
trigonometric problems draw from U(-1,1); expressions demanding positive
inputs (logs, roots, non-integer powers) draw from U(0,2) or U(0,4); the
two-variable Jin problems use U(-3,3). Hyperbolic targets are written with
exp, the only form the operator library speaks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .expr import Expr, parse

__all__ = ["BenchmarkProblem", "PROBLEMS", "get_problem", "suite_names", "get_suite"]


@dataclass(frozen=True)
class BenchmarkProblem:
    name: str
    expression: str
    intervals: tuple[tuple[float, float], ...]
    n_train: int = 20
    n_test: int = 100
    noise: float = 0.0

    def __post_init__(self) -> None:
        for lo, hi in self.intervals:
            if not lo < hi:
                raise ValueError(f"{self.name}: bad interval ({lo}, {hi})")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")

    @property
    def truth(self) -> Expr:
        return parse(self.expression)

    @property
    def d(self) -> int:
        return len(self.intervals)

    def with_noise(self, level: float) -> "BenchmarkProblem":
        return BenchmarkProblem(self.name, self.expression, self.intervals, self.n_train, self.n_test, level)


_U11 = ((-1.0, 1.0),)
_U11_2 = ((-1.0, 1.0), (-1.0, 1.0))
_U01_2 = ((0.0001, 1.0), (0.0001, 1.0))
_U02 = ((0.0001, 2.0),)
_U04 = ((0.0001, 4.0),)
_U33_2 = ((-3.0, 3.0), (-3.0, 3.0))


def _p(name, expr, intervals, n_train=20):
    return BenchmarkProblem(name, expr, intervals, n_train=n_train)


PROBLEMS: dict[str, BenchmarkProblem] = {
    p.name: p
    for p in [
        _p("Nguyen-1", "x0^3 + x0^2 + x0", _U11),
        _p("Nguyen-2", "x0^4 + x0^3 + x0^2 + x0", _U11),
        _p("Nguyen-3", "x0^5 + x0^4 + x0^3 + x0^2 + x0", _U11),
        _p("Nguyen-4", "x0^6 + x0^5 + x0^4 + x0^3 + x0^2 + x0", _U11),
        _p("Nguyen-5", "sin(x0^2)*cos(x0) - 1", _U11),
        _p("Nguyen-6", "sin(x0) + sin(x0 + x0^2)", _U11),
        _p("Nguyen-7", "ln(x0 + 1) + ln(x0^2 + 1)", _U02),
        _p("Nguyen-8", "sqrt(x0)", _U04),
        _p("Nguyen-9", "sin(x0) + sin(x1^2)", _U01_2, 100),
        _p("Nguyen-10", "2*sin(x0)*cos(x1)", _U01_2, 100),
        _p("Nguyen-11", "x0^x1", _U01_2, 100),
        _p("Nguyen-12", "x0^4 - x0^3 + 0.5*x1^2 - x1", _U01_2, 100),
        _p("Nguyen-1c", "3.39*x0^3 + 2.12*x0^2 + 1.78*x0", _U11),
        _p("Nguyen-5c", "sin(x0^2)*cos(x0) - 0.75", _U11),
        _p("Nguyen-7c", "ln(x0 + 1.4) + ln(x0^2 + 1.3)", _U02),
        _p("Nguyen-8c", "sqrt(1.23*x0)", _U04),
        _p("Nguyen-10c", "sin(1.5*x0)*cos(0.5*x1)", _U11_2, 100),
        _p("Constant-1", "3.39*x0^3 + 2.12*x0^2 + 1.78*x0", _U11),
        _p("Constant-2", "sin(x0^2)*cos(x0) - 0.75", _U11),
        _p("Constant-3", "sin(1.5*x0)*cos(0.5*x1)", _U11_2, 100),
        _p("Constant-4", "2.7*x0*x1", _U11_2, 100),
        _p("Constant-5", "sqrt(1.23*x0)", _U04),
        _p("Constant-6", "x0^0.426", _U04),
        _p("Constant-7", "2*sin(1.3*x0)*cos(x1)", _U11_2, 100),
        _p("Constant-8", "ln(x0 + 1.4) + ln(x0^2 + 1.3)", _U02),
        _p("Koza-2", "x0^5 - 2*x0^3 + x0", _U11),
        _p("Koza-4", "x0^6 - 2*x0^4 + x0^2", _U11),
        _p("R-1", "(x0 + 1)^3/(x0^2 - x0 + 1)", _U11),
        _p("R-2", "(x0^5 - 3*x0^3 + 1)/(x0^2 + 1)", _U11),
        _p("R-3", "(x0^6 + x0^5)/(x0^4 + x0^3 + x0^2 + x0 + 1)", _U11),
        _p("Livermore-1", "1/3 + x0 + sin(x0^2)", _U11),
        _p("Livermore-2", "sin(x0^2)*cos(x0) - 2", _U11),
        _p("Livermore-3", "sin(x0^3)*cos(x0^2) - 1", _U11),
        _p("Livermore-4", "ln(x0 + 1) + ln(x0^2 + 1) + ln(x0)", _U02),
        _p("Livermore-5", "x0^4 - x0^3 + x0^2 - x0", _U11),
        _p("Livermore-6", "4*x0^4 + 3*x0^3 + 2*x0^2 + x0", _U11),
        _p("Livermore-7", "(exp(x0) - exp(-x0))/2", _U11),
        _p("Livermore-8", "(exp(x0) + exp(-x0))/2", _U11),
        _p("Livermore-9", "x0^9 + x0^8 + x0^7 + x0^6 + x0^5 + x0^4 + x0^3 + x0^2 + x0", _U11),
        _p("Livermore-10", "6*sin(x0)*cos(x1)", _U01_2, 100),
        _p("Livermore-11", "(x0^2 + x1^2)/(x0 + x1)", _U01_2, 100),
        _p("Livermore-12", "x0^4/x1^4", _U01_2, 100),
        _p("Livermore-13", "x0^(2/3)", _U04),
        _p("Livermore-14", "x0^3 + x0^2 + x0 + sin(x0) + sin(x0^2)", _U11),
        _p("Livermore-15", "x0^(1/5)", _U04),
        _p("Livermore-16", "x0^(2/5)", _U04),
        _p("Livermore-17", "4*sin(x0)*cos(x1)", _U01_2, 100),
        _p("Livermore-18", "sin(x0^2)*cos(x0) - 5", _U11),
        _p("Livermore-19", "x0^5 + x0^4 + x0^2 + x0", _U11),
        _p("Livermore-20", "exp(-x0^2)", _U11),
        _p("Livermore-21", "x0^8 + x0^7 + x0^6 + x0^5 + x0^4 + x0^3 + x0^2 + x0", _U11),
        _p("Livermore-22", "exp(-0.5*x0^2)", _U11),
        _p("Keijzer-3", "0.3*x0*sin(2*pi*x0)", ((-3.0, 3.0),), 100),
        _p("Keijzer-4", "x0^3*exp(-x0)*cos(x0)*sin(x0)*(sin(x0^2)*cos(x0) - 1)", _U04, 100),
        _p("Keijzer-6", "x0*(x0 + 1)/2", _U11),
        _p("Keijzer-7", "ln(x0)", ((1.0, 10.0),), 100),
        _p("Keijzer-8", "sqrt(x0)", _U04),
        _p("Keijzer-9", "ln(x0 + sqrt(x0^2 + 1))", _U04, 100),
        _p("Keijzer-10", "x0^x1", _U01_2, 100),
        _p("Keijzer-11", "x0*x1 + sin((x0 - 1)*(x1 - 1))", _U33_2, 100),
        _p("Keijzer-12", "x0^4 - x0^3 + x1^2/2 - x1", _U01_2, 100),
        _p("Keijzer-13", "6*sin(x0)*cos(x1)", _U33_2, 100),
        _p("Keijzer-14", "8/(2 + x0^2 + x1^2)", _U33_2, 100),
        _p("Keijzer-15", "x0^3/5 + x1^3/2 - x1 - x0", _U33_2, 100),
        _p("Jin-1", "2.5*x0^4 - 1.3*x0^3 + 0.5*x1^2 - 1.7*x1", _U33_2, 100),
        _p("Jin-2", "8.0*x0^2 + 8.0*x1^3 - 15.0", _U33_2, 100),
        _p("Jin-3", "0.2*x0^3 + 0.5*x1^3 - 1.2*x1 - 0.5*x0", _U33_2, 100),
        _p("Jin-4", "1.5*exp(x0) + 5.0*cos(x1)", _U33_2, 100),
        _p("Jin-5", "6.0*sin(x0)*cos(x1)", _U33_2, 100),
        _p("Jin-6", "1.35*x0*x1 + 5.5*sin((x0 - 1.0)*(x1 - 1.0))", _U33_2, 100),
    ]
}


def get_problem(name: str) -> BenchmarkProblem:
    try:
        return PROBLEMS[name]
    except KeyError:
        raise KeyError(f"unknown benchmark problem {name!r}; see suite_names()") from None


def suite_names() -> list[str]:
    return sorted({name.split("-")[0] for name in PROBLEMS})


def get_suite(prefix: str) -> list[BenchmarkProblem]:
    """All problems whose name starts with the given family prefix."""
    out = [p for name, p in sorted(PROBLEMS.items()) if name.lower().startswith(prefix.lower())]
    if not out:
        raise KeyError(f"no problems match suite {prefix!r}")
    return out
