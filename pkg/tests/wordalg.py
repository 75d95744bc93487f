"""Formal star-algebra oracle on noncommutative words (test-only helper).

Expressions are finite sums  sum_w c_w * w  where each word w is a tuple of
letters and the product is concatenation (associative, noncommutative):

* ``('f', (a, b))`` -- the field phi differentiated a times along axis 0 and
  b times along axis 1;
* ``('g', (a, b))`` -- same for phibar;
* ``('T', nu)``     -- the rescaled coordinate xt_nu.

Coefficients are sympy expressions in (theta, m2, lam, Om).  The derivation
rules implemented are exactly the ones every star backend satisfies:

* d_rho is a derivation of the product,
* d_rho xt_nu = 2 (ThetaInv)_{nu rho},
* [xt_nu, A] = 2i d_nu A   (used to normal-order all T letters to the left).

Everything is specialized to D = 2 with the canonical block Theta; identities
verified here hold per index value, which is what the numerics implement.
"""

from __future__ import annotations

from fractions import Fraction

import sympy as sp

theta, m2, lam, Om = sp.symbols("theta m2 lam Om", positive=False)
I = sp.I

# 2 * ThetaInv for the canonical 2x2 block: xt_0 = -(2/theta) x^1, xt_1 = (2/theta) x^0
def _dT(nu: int, axis: int):
    """d_axis xt_nu = 2 (ThetaInv)_{nu, axis}."""
    if nu == 0 and axis == 1:
        return -2 / theta
    if nu == 1 and axis == 0:
        return 2 / theta
    return sp.Integer(0)


def letter_f(d0=0, d1=0):
    return ("f", (d0, d1))


def letter_g(d0=0, d1=0):
    return ("g", (d0, d1))


def letter_T(nu):
    return ("T", nu)


def expr(*terms):
    """Build an expression from (coeff, word) pairs."""
    out = {}
    for coeff, word in terms:
        _acc(out, tuple(word), sp.sympify(coeff))
    return out


def _acc(d, word, coeff):
    c = d.get(word, sp.Integer(0)) + coeff
    if sp.simplify(c) == 0:
        d.pop(word, None)
    else:
        d[word] = c


def add(*exprs):
    out = {}
    for e in exprs:
        for w, c in e.items():
            _acc(out, w, c)
    return out


def scale(e, factor):
    factor = sp.sympify(factor)
    return {w: factor * c for w, c in e.items()}


def mul(e1, e2):
    out = {}
    for w1, c1 in e1.items():
        for w2, c2 in e2.items():
            _acc(out, w1 + w2, c1 * c2)
    return out


def word(*letters):
    return {tuple(letters): sp.Integer(1)}


def commutator(e1, e2):
    return add(mul(e1, e2), scale(mul(e2, e1), -1))


def anticommutator(e1, e2):
    return add(mul(e1, e2), mul(e2, e1))


def _deriv_letter(letter, axis):
    """Return list of (coeff, replacement-letters) for d_axis letter."""
    kind = letter[0]
    if kind in ("f", "g"):
        d = list(letter[1])
        d[axis] += 1
        return [(sp.Integer(1), (kind, tuple(d)))]
    if kind == "T":
        return [(_dT(letter[1], axis), None)]  # scalar; letter disappears
    raise ValueError(letter)


def deriv(e, axis):
    out = {}
    for w, c in e.items():
        for i, letter in enumerate(w):
            for factor, repl in _deriv_letter(letter, axis):
                if factor == 0:
                    continue
                if repl is None:
                    nw = w[:i] + w[i + 1 :]
                else:
                    nw = w[:i] + (repl,) + w[i + 1 :]
                _acc(out, nw, c * factor)
    return out


def deriv_multi(e, d):
    for axis, times in enumerate(d):
        for _ in range(times):
            e = deriv(e, axis)
    return e


def normal_order(e):
    """Move every T letter left of every field letter; sort T letters.

    Uses  A * T_nu = T_nu * A - 2i d_nu A  and
    T_mu * T_nu = T_nu * T_mu + 4i (ThetaInv)_{nu mu}  for mu > nu.
    """
    work = dict(e)
    done = {}
    while work:
        w, c = work.popitem()
        idx = _first_disorder(w)
        if idx is None:
            _acc(done, w, c)
            continue
        a, b = w[idx], w[idx + 1]
        if a[0] != "T" and b[0] == "T":
            # A T -> T A - 2i dA
            swapped = w[:idx] + (b, a) + w[idx + 2 :]
            _acc(work, swapped, c)
            for factor, repl in _deriv_letter(a, _axis_of(b)):
                if factor == 0:
                    continue
                nw = w[:idx] + (repl,) + w[idx + 2 :] if repl is not None else None
                if nw is not None:
                    _acc(work, nw, -2 * I * c * factor)
        else:
            # both T with a.nu > b.nu:  T_mu T_nu -> T_nu T_mu + 2i d_mu(T_nu)
            swapped = w[:idx] + (b, a) + w[idx + 2 :]
            _acc(work, swapped, c)
            scalar = 2 * I * _dT(b[1], a[1])
            if scalar != 0:
                _acc(work, w[:idx] + w[idx + 2 :], c * scalar)
    return done


def _axis_of(tletter):
    return tletter[1]


def _first_disorder(w):
    for i in range(len(w) - 1):
        a, b = w[i], w[i + 1]
        if a[0] != "T" and b[0] == "T":
            return i
        if a[0] == "T" and b[0] == "T" and a[1] > b[1]:
            return i
    return None


def is_zero(e):
    e = normal_order(e)
    return all(sp.simplify(c) == 0 for c in e.values())


def difference_str(e1, e2):
    diff = normal_order(add(e1, scale(e2, -1)))
    lines = []
    for w, c in sorted(diff.items(), key=lambda kv: (len(kv[0]), str(kv[0]))):
        c = sp.simplify(c)
        if c != 0:
            lines.append(f"  {c} * {w}")
    return "\n".join(lines)


def cyclic_reduce(e):
    """Canonical representative modulo cyclic rotation (integral identities)."""
    out = {}
    for w, c in e.items():
        if w:
            rots = [w[i:] + w[:i] for i in range(len(w))]
            w = min(rots)
        _acc(out, w, c)
    return out


def integrals_equal(e1, e2):
    diff = cyclic_reduce(normal_order(add(e1, scale(e2, -1))))
    return all(sp.simplify(c) == 0 for c in diff.values())


def functional_derivative(e, kind):
    """delta/delta(phi or phibar) of the integral of ``e`` (cyclic variation).

    For each occurrence of a ``kind`` letter carrying derivative multi-index
    d, rotate the word so that slot is last, remove it, and apply
    (-1)^|d| d^d to the rest.
    """
    out = {}
    for w, c in e.items():
        for i, letter in enumerate(w):
            if letter[0] != kind:
                continue
            d = letter[1]
            rest = w[i + 1 :] + w[:i]
            contrib = deriv_multi({rest: c}, d)
            sign = (-1) ** (d[0] + d[1])
            for nw, nc in contrib.items():
                _acc(out, nw, sign * nc)
    return out


def functional_derivative_T(e, nu):
    """delta/delta xt_nu of the integral of ``e`` (T letters carry no derivatives)."""
    out = {}
    for w, c in e.items():
        for i, letter in enumerate(w):
            if letter != ("T", nu):
                continue
            rest = w[i + 1 :] + w[:i]
            _acc(out, rest, c)
    return out
