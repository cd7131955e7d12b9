"""Shared builders for the test modules."""

import numpy as np

from smsnmix import ComponentParams, ScaleLaw

FAMILY_LAWS = {
    "normal": ScaleLaw.skew_normal(),
    "t": ScaleLaw.skew_t(5.0),
    "slash": ScaleLaw.skew_slash(3.0),
    "vgamma": ScaleLaw.skew_vgamma(2.5),
}


def random_params(rng, p, lam_scale=2.0):
    A = rng.normal(size=(p, p))
    sigma = A @ A.T + p * np.eye(p) * 0.5
    return ComponentParams(rng.normal(size=p), sigma, rng.normal(scale=lam_scale, size=p))


def random_law(rng, kind):
    if kind == "normal":
        return ScaleLaw.skew_normal()
    if kind == "t":
        return ScaleLaw.skew_t(float(rng.uniform(3.0, 15.0)))
    if kind == "slash":
        return ScaleLaw.skew_slash(float(rng.uniform(1.5, 6.0)))
    return ScaleLaw.skew_vgamma(float(rng.uniform(2.0, 6.0)))


# acceptance results, printed once more in the terminal summary
ACCEPTANCE = {}


def record(number, ok, detail):
    line = f"ACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok
