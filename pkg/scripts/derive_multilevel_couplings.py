"""Relative F'=1 couplings for the 87Rb D2 Lambda system used by the multilevel model.

Computes dipole matrix elements <F', m'| d_q |F, m> through the Wigner-Eckart
theorem (3-j symbol times a 6-j reduction from J to F) and prints the couplings
of the alpha=|1,-1> (sigma+) and beta=|1,+1> (sigma-) legs into |F'=1, 0>,
normalised to the corresponding legs into |F'=0, 0>.

Run:  python scripts/derive_multilevel_couplings.py
"""

from sympy import Rational, simplify, sqrt
from sympy.physics.wigner import wigner_3j, wigner_6j

J, JP, I = Rational(1, 2), Rational(3, 2), Rational(3, 2)


def reduced_f(F, FP):
    # <F'||d||F> in units of <J'||d||J>
    return (-1) ** (FP + J + 1 + I) * sqrt((2 * FP + 1) * (2 * J + 1)) * wigner_6j(JP, FP, I, F, J, 1)


def dipole(FP, mP, F, m, q):
    return (-1) ** (FP - mP) * wigner_3j(FP, 1, F, -mP, q, m) * reduced_f(F, FP)


def couplings():
    a0 = dipole(0, 0, 1, -1, 1)
    b0 = dipole(0, 0, 1, 1, -1)
    a1 = dipole(1, 0, 1, -1, 1)
    b1 = dipole(1, 0, 1, 1, -1)
    return {
        "e0": (simplify(a0), simplify(b0)),
        "e1": (simplify(a1), simplify(b1)),
        "c1_plus": simplify(a1 / a0),
        "c1_minus": simplify(b1 / b0),
    }


if __name__ == "__main__":
    res = couplings()
    for k, v in res.items():
        print(k, v)
    print("c1_plus  =", float(res["c1_plus"]))
    print("c1_minus =", float(res["c1_minus"]))
