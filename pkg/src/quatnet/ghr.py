"""Numerical quaternion derivatives: component partials, HR and GHR operators.

The derivative operators here are finite-difference based and exist to make
the calculus itself executable: the naive componentwise derivative (for which
product and chain rule fail), the eight HR variants, and the
rotation-generalised GHR derivative that the backpropagation rules are built
on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .quaternion import (
    I,
    J,
    K,
    ONE,
    Quaternion,
    conjugate,
    hamilton,
    norm,
    qadd,
)

QScalarFn = Callable[[Quaternion], Quaternion]

DEFAULT_STEP = 1e-5

_UNIT_BY_INDEX = (ONE, I, J, K)

# Signs of the d1 i, d2 j, d3 k terms in the eight HR variants; d0 always
# enters with +1/4.
_HR_SIGNS = {
    "q": (-1, -1, -1),
    "qi": (-1, 1, 1),
    "qj": (1, -1, 1),
    "qk": (1, 1, -1),
    "q*": (1, 1, 1),
    "qi*": (1, -1, -1),
    "qj*": (-1, 1, -1),
    "qk*": (-1, -1, 1),
}

HR_VARIANTS = tuple(_HR_SIGNS)


@dataclass(frozen=True)
class ComponentPartials:
    """Central-difference partials of f with respect to q0..q3.

    Each entry is quaternion valued; for real-valued f the imaginary parts
    are zero.
    """

    d0: Quaternion
    d1: Quaternion
    d2: Quaternion
    d3: Quaternion

    @property
    def entries(self):
        return (self.d0, self.d1, self.d2, self.d3)


def component_partials(f: QScalarFn, q: Quaternion, h: float = DEFAULT_STEP) -> ComponentPartials:
    """Central differences (f(q + h e) - f(q - h e)) / 2h per component direction."""
    if h <= 0:
        raise ValueError("step h must be positive")
    base = q.as_array()
    partials = []
    for a in range(4):
        hi = base.copy()
        lo = base.copy()
        hi[a] += h
        lo[a] -= h
        f_hi = f(Quaternion.from_array(hi)).as_array()
        f_lo = f(Quaternion.from_array(lo)).as_array()
        d = (f_hi - f_lo) / (2.0 * h)
        if not all(abs(v) < float("inf") for v in d) or any(v != v for v in d):
            raise FloatingPointError(f"non-finite partial derivative along component {a}")
        partials.append(Quaternion.from_array(d))
    return ComponentPartials(*partials)


def naive_derivative(p: ComponentPartials) -> Quaternion:
    """d0 + d1 i + d2 j + d3 k, units multiplied on the right of each partial."""
    out = p.d0
    for d, unit in zip((p.d1, p.d2, p.d3), (I, J, K)):
        out = qadd(out, hamilton(d, unit))
    return out


def hr_derivative(p: ComponentPartials, variant: str = "q") -> Quaternion:
    """One of the eight 1/4-weighted signed combinations of the HR calculus."""
    if variant not in _HR_SIGNS:
        raise ValueError(f"variant must be one of {HR_VARIANTS}, got {variant!r}")
    signs = _HR_SIGNS[variant]
    out = p.d0
    for sign, d, unit in zip(signs, (p.d1, p.d2, p.d3), (I, J, K)):
        out = qadd(out, hamilton(d, unit) * float(sign))
    return out * 0.25


def rotated_unit(unit: Quaternion, mu: Quaternion) -> Quaternion:
    """unit^mu = mu unit mu* / |mu|^2."""
    n2 = norm(mu) ** 2
    if n2 == 0.0:
        raise ValueError("mu must be nonzero")
    return hamilton(hamilton(mu, unit), conjugate(mu)) * (1.0 / n2)


def ghr_derivative(p: ComponentPartials, mu: Quaternion = ONE,
                   conjugate_form: bool = False) -> Quaternion:
    """GHR derivative 1/4 (d0 -/+ d1 i^mu -/+ d2 j^mu -/+ d3 k^mu).

    ``conjugate_form=False`` gives the derivative with respect to q^mu
    (minus signs), ``True`` the one with respect to q^{mu*} (plus signs).
    At mu = 1 these coincide with the HR "q" and "q*" variants.
    """
    sign = 1.0 if conjugate_form else -1.0
    out = p.d0
    for d, unit in zip((p.d1, p.d2, p.d3), (I, J, K)):
        out = qadd(out, hamilton(d, rotated_unit(unit, mu)) * sign)
    return out * 0.25


@dataclass(frozen=True)
class RuleFailureReport:
    """Naive derivative vs what one of the classical rules would predict."""

    naive: Quaternion
    rule_value: Quaternion
    gap: float
    degenerate: bool = False


def demo_product_rule_failure(q: Quaternion, h: float = DEFAULT_STEP) -> RuleFailureReport:
    """Differentiate f(q) = q q* naively and via the real-calculus product rule.

    The naive componentwise derivative gives 2q, the product rule applied to
    the same expression gives 4q - 2q*; the two disagree whenever q has a
    nonzero imaginary part.
    """
    f = lambda t: hamilton(t, conjugate(t))
    naive = naive_derivative(component_partials(f, q, h))
    rule_value = qadd(q * 4.0, conjugate(q) * -2.0)
    gap = norm(qadd(naive, -rule_value))
    imag = norm(qadd(q, -conjugate(q))) * 0.5
    return RuleFailureReport(naive, rule_value, gap, degenerate=imag < 1e-12)


def demo_chain_rule_failure(x: Quaternion, y: Quaternion,
                            h: float = DEFAULT_STEP) -> RuleFailureReport:
    """Differentiate f(x) = (xy)(xy)* directly and via the real chain rule.

    Direct componentwise differentiation gives 2 x |y|^2; chaining the outer
    derivative 2z through the inner derivative -2y* gives -4 x y y*.  The gap
    is 6 |x| |y|^2, positive whenever both operands are nonzero.
    """
    f = lambda t: hamilton(hamilton(t, y), conjugate(hamilton(t, y)))
    direct = naive_derivative(component_partials(f, x, h))
    chained = hamilton(hamilton(x, y), conjugate(y)) * -4.0
    gap = norm(qadd(direct, -chained))
    return RuleFailureReport(direct, chained, gap,
                             degenerate=norm(x) * norm(y) < 1e-12)
