"""Independent reference implementations used only by the tests."""
import math
from fractions import Fraction


def racah_3j(j1, j2, j3, m1, m2, m3):
    """Textbook Racah sum in plain floats, brute force over k."""
    j1, j2, j3, m1, m2, m3 = (Fraction(x) for x in (j1, j2, j3, m1, m2, m3))
    if m1 + m2 + m3 != 0:
        return 0.0
    if any(abs(m) > j for m, j in ((m1, j1), (m2, j2), (m3, j3))):
        return 0.0
    if not abs(j1 - j2) <= j3 <= j1 + j2:
        return 0.0

    def fact(x):
        assert x.denominator == 1
        return math.factorial(int(x))

    tri = fact(j1 + j2 - j3) * fact(j1 - j2 + j3) * fact(-j1 + j2 + j3) / fact(j1 + j2 + j3 + 1)
    pre = math.sqrt(tri * fact(j1 + m1) * fact(j1 - m1) * fact(j2 + m2) * fact(j2 - m2)
                    * fact(j3 + m3) * fact(j3 - m3))
    total = 0.0
    for k in range(0, int(j1 + j2 + j3) + 2):
        args = (k, j3 - j2 + k + m1, j3 - j1 + k - m2, j1 + j2 - j3 - k, j1 - k - m1,
                j2 - k + m2)
        if any(Fraction(a) < 0 for a in args):
            continue
        den = 1
        for a in args:
            den *= fact(Fraction(a))
        total += (-1) ** k / den
    return (-1) ** int(j1 - j2 - m3) * pre * total


def halves(jmax2):
    """All j = 0, 1/2, ..., jmax2/2 as Fractions."""
    return [Fraction(t, 2) for t in range(0, jmax2 + 1)]


def ms(j):
    return [Fraction(t, 2) for t in range(-int(2 * j), int(2 * j) + 1, 2)]
