"""Brute-force ground truth for the sharp CAPO bounds on discrete instances.

Under the MSM the ratio w(y) = p(y | x, do(a)) / p(y | x, a) ranges over the
box [c^-(a,x), c^+(a,x)] subject to E[w | x, a] = 1. The sharp bounds are the
optimal values of

    max / min  sum_i w_i y_i p_i   s.t.  sum_i w_i p_i = 1,  c^- <= w_i <= c^+

which is a fractional knapsack: writing w = c^- + (c^+ - c^-) t with t in
[0, 1], the constraint becomes sum_i p_i t_i = (1 - c^-) / (c^+ - c^-), so
the optimum fills the largest (upper) or smallest (lower) outcomes first.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Dataset, make_rng
from .nuisance import NuisanceSet, SensitivitySpec, Side, c_coefficients
from .policy import Policy

# cumulative-probability slack when locating the quantile atom
CDF_TOL = 1e-12


@dataclass(frozen=True)
class OutcomeLaw:
    """Finite outcome distribution; atoms kept sorted by value."""

    y: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        p = np.asarray(self.p, dtype=float).reshape(-1)
        if len(y) != len(p) or len(y) == 0:
            raise ValueError("outcome law needs matching, nonempty value and probability arrays")
        if np.any(p < 0) or abs(p.sum() - 1) > 1e-9:
            raise ValueError("outcome probabilities must be nonnegative and sum to 1")
        order = np.argsort(y, kind="stable")
        object.__setattr__(self, "y", y[order])
        object.__setattr__(self, "p", p[order])

    @property
    def mean(self) -> float:
        return float(self.y @ self.p)

    def quantile(self, level: float) -> float:
        """inf{y : P(Y <= y) >= level}."""
        F = np.cumsum(self.p)
        k = int(np.argmax(F >= level - CDF_TOL))
        return float(self.y[k])

    def trimmed_means(self, level: float) -> tuple[float, float]:
        """(E[Y 1{Y <= q}], E[Y 1{Y >= q}]) at the level-quantile q; the atom at q counts in both."""
        q = self.quantile(level)
        return float(self.y[self.y <= q] @ self.p[self.y <= q]), float(self.y[self.y >= q] @ self.p[self.y >= q])

    def negate(self) -> "OutcomeLaw":
        return OutcomeLaw(-self.y, self.p)


@dataclass(frozen=True, eq=False)
class DiscreteInstance:
    """Finitely many covariate cells, each with a propensity vector and per-arm outcome laws.

    ``x``: (n_cells,) scalar covariate value per cell; ``px``: cell probabilities;
    ``e``: (n_cells, d_a) observational propensities; ``laws[c][a]``: outcome law.
    """

    x: np.ndarray
    px: np.ndarray
    e: np.ndarray
    laws: tuple[tuple[OutcomeLaw, ...], ...]

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(-1)
        px = np.asarray(self.px, dtype=float).reshape(-1)
        e = np.asarray(self.e, dtype=float)
        if len(np.unique(x)) != len(x):
            raise ValueError("cell covariate values must be distinct")
        if np.any(px < 0) or abs(px.sum() - 1) > 1e-9:
            raise ValueError("cell probabilities must be nonnegative and sum to 1")
        if e.shape != (len(x), e.shape[1]) or np.any(e <= 0) or np.any(e >= 1):
            raise ValueError("propensities must lie strictly inside (0, 1)")
        if np.any(np.abs(e.sum(axis=1) - 1) > 1e-9):
            raise ValueError("propensities must sum to 1 per cell")
        if len(self.laws) != len(x) or any(len(row) != e.shape[1] for row in self.laws):
            raise ValueError("need one outcome law per (cell, arm)")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "px", px)
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "laws", tuple(tuple(r) for r in self.laws))

    @property
    def n_cells(self) -> int:
        return len(self.x)

    @property
    def d_a(self) -> int:
        return self.e.shape[1]

    def cell_index(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1)
        order = np.argsort(self.x)
        pos = np.searchsorted(self.x[order], X)
        pos = np.clip(pos, 0, self.n_cells - 1)
        idx = order[pos]
        if not np.all(self.x[idx] == X):
            raise ValueError("covariate value is not a cell of this instance")
        return idx

    def negate(self) -> "DiscreteInstance":
        laws = tuple(tuple(law.negate() for law in row) for row in self.laws)
        return DiscreteInstance(self.x, self.px, self.e, laws)

    def sample(self, n: int, seed: int) -> Dataset:
        rng = make_rng(seed, "discrete-instance")
        cells = rng.choice(self.n_cells, size=n, p=self.px)
        u_a = rng.uniform(size=n)
        u_y = rng.uniform(size=n)
        a = (u_a[:, None] > np.cumsum(self.e[cells], axis=1)).sum(axis=1)
        a = np.minimum(a, self.d_a - 1)
        y = np.empty(n)
        for i in range(n):
            law = self.laws[cells[i]][a[i]]
            k = min(int(np.searchsorted(np.cumsum(law.p), u_y[i], side="right")), len(law.y) - 1)
            y[i] = law.y[k]
        return Dataset(y, a, self.x[cells].reshape(-1, 1), self.d_a)


# ---------------------------------------------------------------------------
# LP oracle

@dataclass(frozen=True)
class LPSolution:
    value: float
    weights: np.ndarray  # aligned with law.y (sorted)


def solve_sharp_lp(law: OutcomeLaw, e: float, spec: SensitivitySpec, side: Side) -> LPSolution:
    c = c_coefficients(spec, e)
    c_plus, c_minus = float(c.c_plus), float(c.c_minus)
    assert c_minus <= 1.0 + 1e-15 and c_plus >= 1.0 - 1e-15, "MSM weight box excludes 1"
    if c_plus - c_minus < 1e-15:
        w = np.ones(len(law.y))
        return LPSolution(law.mean, w)
    budget = (1.0 - c_minus) / (c_plus - c_minus)
    assert abs(budget - spec.alpha_minus) < 1e-12
    order = np.arange(len(law.y))[::-1] if side == "upper" else np.arange(len(law.y))
    t = np.zeros(len(law.y))
    left = budget
    for i in order:
        if left <= 0:
            break
        take = min(1.0, left / law.p[i]) if law.p[i] > 0 else 1.0
        t[i] = take
        left -= take * law.p[i]
    w = c_minus + (c_plus - c_minus) * t
    interior = (w > c_minus + 1e-12) & (w < c_plus - 1e-12)
    assert interior.sum() <= 1, "fractional knapsack with more than one fractional weight"
    assert abs(w @ law.p - 1.0) < 1e-12, "weights violate the mean-one constraint"
    return LPSolution(float((w * law.y) @ law.p), w)


def lp_sharp_capo(law: OutcomeLaw, e: float, spec: SensitivitySpec, side: Side) -> float:
    return solve_sharp_lp(law, e, spec, side).value


def closed_form_capo(law: OutcomeLaw, e: float, spec: SensitivitySpec, side: Side) -> float:
    """Closed-form sharp bound evaluated on a finite law (exact only in the atomless limit)."""
    lo, hi = law.trimmed_means(spec.level(side))
    c_lo, c_hi = c_coefficients(spec, e).tails(side)
    return float(c_lo * lo + c_hi * hi)


# ---------------------------------------------------------------------------
# oracle nuisances and population quantities

def discrete_nuisances(instance: DiscreteInstance, spec: SensitivitySpec) -> NuisanceSet:
    tables = {}
    for s in ("upper", "lower"):
        level = spec.level(s)
        q = np.array([[law.quantile(level) for law in row] for row in instance.laws])
        tm = np.array([[law.trimmed_means(level) for law in row] for row in instance.laws])
        tables[s] = (q, tm[..., 0], tm[..., 1])
    means = np.array([[law.mean for law in row] for row in instance.laws])

    def lookup(table):
        return lambda X: table[instance.cell_index(np.asarray(X)[:, 0])]

    return NuisanceSet(
        spec,
        lookup(instance.e),
        {s: lookup(tables[s][0]) for s in tables},
        {s: lookup(tables[s][1]) for s in tables},
        {s: lookup(tables[s][2]) for s in tables},
        capo=lookup(means),
        provenance="oracle",
    )


def population_value_bound(instance: DiscreteInstance, policy: Policy, spec: SensitivitySpec,
                           side: Side) -> float:
    pi = policy.probs(instance.x.reshape(-1, 1))
    total = 0.0
    for c in range(instance.n_cells):
        for a in range(instance.d_a):
            total += instance.px[c] * pi[c, a] * lp_sharp_capo(instance.laws[c][a], instance.e[c, a], spec, side)
    return total


def population_value(instance: DiscreteInstance, policy: Policy) -> float:
    pi = policy.probs(instance.x.reshape(-1, 1))
    means = np.array([[law.mean for law in row] for row in instance.laws])
    return float(instance.px @ (pi * means).sum(axis=1))


@dataclass
class VerificationReport:
    rows: list[tuple[int, int, str, float, float]] = field(default_factory=list)
    tol: float = 1e-9

    @property
    def max_abs_diff(self) -> float:
        return max((abs(cf - lp) for *_, cf, lp in self.rows), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_abs_diff <= self.tol


def verify_closed_form(instance: DiscreteInstance, spec: SensitivitySpec, tol: float = 1e-9) -> VerificationReport:
    """Compare the closed-form bound (through oracle nuisances) with the LP per (cell, arm, side)."""
    from .bounds import sharp_capo_values

    nv = discrete_nuisances(instance, spec).evaluate(instance.x.reshape(-1, 1))
    report = VerificationReport(tol=tol)
    for s in ("upper", "lower"):
        closed = sharp_capo_values(nv, spec, s)
        for c in range(instance.n_cells):
            for a in range(instance.d_a):
                lp = lp_sharp_capo(instance.laws[c][a], instance.e[c, a], spec, s)
                report.rows.append((c, a, s, float(closed[c, a]), lp))
    return report


def uniform_refinement_gap(n_atoms: int, spec: SensitivitySpec, e: float = 0.5, side: Side = "upper") -> float:
    """|closed form - LP| on Uniform(0,1) discretised to ``n_atoms`` midpoint atoms."""
    law = OutcomeLaw((np.arange(n_atoms) + 0.5) / n_atoms, np.full(n_atoms, 1.0 / n_atoms))
    return abs(closed_form_capo(law, e, spec, side) - lp_sharp_capo(law, e, spec, side))


def random_aligned_instance(rng: np.random.Generator, spec: SensitivitySpec, n_cells: int = 3,
                            d_a: int = 2, max_atoms: int = 6) -> DiscreteInstance:
    """Random instance whose alpha^- and alpha^+ quantile atoms both sit at y = 0.

    P(Y < 0) < alpha^- and P(Y > 0) < alpha^- per law, so the zero atom carries
    both quantile levels and the double-counted atom contributes nothing.
    """
    x = np.sort(rng.choice(np.arange(-50, 50), size=n_cells, replace=False)) / 10.0
    px = rng.dirichlet(np.ones(n_cells))
    e = rng.dirichlet(np.ones(d_a), size=n_cells)
    e = 0.05 + 0.9 * e  # keep clear of 0 and 1
    e = e / e.sum(axis=1, keepdims=True)
    laws = []
    for _ in range(n_cells):
        row = []
        for _ in range(d_a):
            k_lo, k_hi = rng.integers(1, max_atoms, size=2)
            m_lo, m_hi = rng.uniform(0.05, 0.95, size=2) * spec.alpha_minus
            y = np.concatenate([-rng.uniform(0.1, 5, k_lo), [0.0], rng.uniform(0.1, 5, k_hi)])
            p = np.concatenate([m_lo * rng.dirichlet(np.ones(k_lo)), [1 - m_lo - m_hi],
                                m_hi * rng.dirichlet(np.ones(k_hi))])
            row.append(OutcomeLaw(y, p))
        laws.append(tuple(row))
    return DiscreteInstance(x, px, e, tuple(laws))


# ---------------------------------------------------------------------------
# text format: one line per (cell, arm, atom)

def save_instance(instance: DiscreteInstance, path: str | Path) -> None:
    """Columns: cell arm x px e y p (whitespace separated, '#' comments)."""
    lines = ["# cell arm x px e y p"]
    for c in range(instance.n_cells):
        for a in range(instance.d_a):
            law = instance.laws[c][a]
            for y, p in zip(law.y, law.p):
                lines.append(" ".join([str(c), str(a), repr(float(instance.x[c])), repr(float(instance.px[c])),
                                       repr(float(instance.e[c, a])), repr(float(y)), repr(float(p))]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_instance(path: str | Path) -> DiscreteInstance:
    cells: dict[int, dict] = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 7:
            raise ValueError(f"line {line_no}: expected 7 fields, got {len(parts)}")
        c, a = int(parts[0]), int(parts[1])
        x, px, e, y, p = (float(v) for v in parts[2:])
        cell = cells.setdefault(c, {"x": x, "px": px, "e": {}, "atoms": {}})
        if cell["x"] != x or cell["px"] != px:
            raise ValueError(f"line {line_no}: inconsistent cell {c}")
        if cell["e"].setdefault(a, e) != e:
            raise ValueError(f"line {line_no}: inconsistent propensity for cell {c}, arm {a}")
        cell["atoms"].setdefault(a, []).append((y, p))
    keys = sorted(cells)
    d_a = 1 + max(max(cells[k]["e"]) for k in keys)
    e = np.array([[cells[k]["e"][a] for a in range(d_a)] for k in keys])
    laws = tuple(
        tuple(OutcomeLaw([t[0] for t in cells[k]["atoms"][a]], [t[1] for t in cells[k]["atoms"][a]])
              for a in range(d_a))
        for k in keys
    )
    return DiscreteInstance([cells[k]["x"] for k in keys], [cells[k]["px"] for k in keys], e, laws)
