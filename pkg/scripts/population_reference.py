"""Population reference regrets on the synthetic benchmark.

For each Gamma* (data) and Gamma (working), prints the true regret vs uniform of
three deterministic policies built from exact nuisances:

  bayes   argmin_a E[Y[a] | x]            (needs the unobserved U)
  sharp   argmin_a Q+(a, x)               (what the bound-minimising learners target)
  dr      argmin_a E[Y | x, A = a]        (what the DR learner targets)

These are the values the trained policies approach as n grows and the
optimizer converges.
"""

import argparse

import numpy as np

from robust_policy import dgp
from robust_policy.bounds import sharp_capo_values
from robust_policy.nuisance import SensitivitySpec
from robust_policy.policy import FunctionPolicy


def argmin_policy(score):
    return FunctionPolicy(lambda X: np.eye(2)[np.argmin(score(X), axis=1)], 2)


def references(gamma_star: float, gamma: float) -> dict[str, float]:
    spec = SensitivitySpec(gamma)
    nuis = dgp.oracle_nuisances(dgp.SyntheticSpec(gamma_star), spec)
    sharp = argmin_policy(lambda X: sharp_capo_values(nuis.evaluate(X), spec, "upper"))
    dr = argmin_policy(nuis.capo)
    return {"bayes": dgp.true_regret(dgp.bayes_policy(), quadrature_points=8193),
            "sharp": dgp.true_regret(sharp, quadrature_points=8193),
            "dr": dgp.true_regret(dr, quadrature_points=8193)}


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.parse_args()
    print(f"{'gamma*':>7} {'gamma':>7} {'bayes':>8} {'sharp':>8} {'dr':>8}")
    cells = [(g, g) for g in (1.0, 5.0, 7.0, 10.0)] + [(7.0, g) for g in (2.0, 20.0, 100.0)]
    for gs, g in cells:
        r = references(gs, g)
        print(f"{gs:7g} {g:7g} {r['bayes']:+8.3f} {r['sharp']:+8.3f} {r['dr']:+8.3f}")
