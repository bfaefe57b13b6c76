"""Discrete divergences and an executable verifier for the transfer bound.

For finite joints P(x, y) and Q(x, y) over |X| feature atoms and K classes,
the verifier evaluates every link of the chain that bounds
d_TV(P_XY, Q_XY) by the three trainable divergence terms:

  (1) triangle:   d_TV(P_XY, Q_XY) <= d_TV(P_XY, P_{Y|X} Q_X)
                                      + d_TV(P_{Y|X} Q_X, Q_XY)
  (2) marginal:   d_TV(P_{Y|X} P_X, P_{Y|X} Q_X) = d_TV(P_X, Q_X)
                  (the constant is exactly 1 in the discrete case because
                  conditional rows sum to 1)
  (3) inversion:  max_x d_TV(P_{Y|x}, Q'_{Y|x})
                  <= ||M^{-1}||_inf * max_x d_TV(P_{Ybar|x}, Q'_{Ybar|x})
  (4) Pinsker:    d_TV <= sqrt(d_KL / 2) per pair, and
                  d_TV(P_X, Q_X) <= 2 sqrt(d_JS(P_X, Q_X))
  (5) composite:  d_TV(P_XY, Q_XY) <= 2 sqrt(d_JS(P_X, Q_X))
                  + ||M^{-1}||_inf * sqrt(maxKL(P_Ybar|X, Q'_Ybar|X) / 2)
                  + sqrt(maxKL(Q'_{Y|X}, Q_{Y|X}) / 2)

Conditional divergences are taken as maxima over feature atoms, under which
the instance constants c1 and c2 both equal 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .labels import TransitionMatrix

MASS_TOL = 1e-12
SLACK_TOL = -1e-9
COND_WARN = 1e12


class DivergenceInputError(ValueError):
    pass


@dataclass(frozen=True)
class DiscreteJoint:
    """Exhaustive joint over |X| feature atoms and K classes."""

    table: np.ndarray  # shape (|X|, K)

    def __post_init__(self):
        t = np.asarray(self.table, dtype=np.float64)
        object.__setattr__(self, "table", t)
        if t.ndim != 2:
            raise DivergenceInputError("joint table must be 2-D (|X| x K)")
        if np.any(t < 0):
            raise DivergenceInputError("joint table entries must be nonnegative")
        if abs(t.sum() - 1.0) > MASS_TOL * t.size + 1e-12:
            raise DivergenceInputError(f"joint mass is {t.sum()}, expected 1")

    @property
    def n_x(self) -> int:
        return self.table.shape[0]

    @property
    def K(self) -> int:
        return self.table.shape[1]


def _check_pair(p, q):
    p = np.asarray(p, dtype=np.float64).ravel()
    q = np.asarray(q, dtype=np.float64).ravel()
    if p.shape != q.shape:
        raise DivergenceInputError(
            f"support mismatch: {p.shape} vs {q.shape}")
    return p, q


def tv(p, q) -> float:
    """Total variation distance, 0.5 * sum |p - q|."""
    p, q = _check_pair(p, q)
    return 0.5 * float(np.abs(p - q).sum())


def kl(p, q) -> float:
    """KL divergence with natural log; 0 log 0 = 0; +inf where q=0 < p."""
    p, q = _check_pair(p, q)
    mask = p > 0
    if np.any(q[mask] == 0):
        return math.inf
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def js(p, q) -> float:
    """Jensen-Shannon divergence; always finite and bounded by ln 2."""
    p, q = _check_pair(p, q)
    m = 0.5 * (p + q)
    return 0.5 * kl(p, m) + 0.5 * kl(q, m)


def conditional_tables(joint: DiscreteJoint):
    """Factor p(x, y) into p(y|x) rows and the p(x) marginal.

    Zero-mass feature atoms get a uniform conditional row; the returned mask
    flags them so reports can surface the convention.
    """
    t = joint.table
    marginal = t.sum(axis=1)
    zero_mass = marginal == 0
    cond = np.empty_like(t)
    safe = np.where(zero_mass, 1.0, marginal)
    cond[:] = t / safe[:, None]
    cond[zero_mass] = 1.0 / joint.K
    return cond, marginal, zero_mass


def inf_norm_inverse(transition: TransitionMatrix) -> float:
    """Max absolute row sum of M^{-1}; errors if M is singular."""
    M = transition.matrix
    if np.linalg.matrix_rank(M) < M.shape[0]:
        raise DivergenceInputError("transition matrix is singular; bound requires full rank")
    if np.linalg.cond(M) > COND_WARN:
        raise DivergenceInputError("transition matrix is numerically singular")
    inv = np.linalg.inv(M)
    return float(np.abs(inv).sum(axis=1).max())


@dataclass(frozen=True)
class InequalityCheck:
    name: str
    lhs: float
    rhs: float
    vacuous: bool = False

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def holds(self) -> bool:
        return self.vacuous or self.slack >= SLACK_TOL


@dataclass
class BoundCheckReport:
    checks: list = field(default_factory=list)
    c1: float = 1.0
    c2: float = 1.0
    m_inv_inf: float = 0.0
    zero_mass_atoms: bool = False

    @property
    def all_hold(self) -> bool:
        return all(c.holds for c in self.checks)

    def to_json(self) -> str:
        payload = {
            "c1": self.c1,
            "c2": self.c2,
            "m_inv_inf": self.m_inv_inf,
            "zero_mass_atoms": self.zero_mass_atoms,
            "all_hold": self.all_hold,
            "checks": [
                {**asdict(c), "slack": c.slack, "holds": c.holds}
                for c in self.checks
            ],
        }
        return json.dumps(payload, indent=2)


def _max_row_tv(a, b) -> float:
    return max(tv(a[i], b[i]) for i in range(a.shape[0]))


def _max_row_kl(a, b) -> float:
    return max(kl(a[i], b[i]) for i in range(a.shape[0]))


def verify_theorem1_chain(p_joint: DiscreteJoint, q_joint: DiscreteJoint,
                          q_prime_cond: np.ndarray,
                          transition: TransitionMatrix) -> BoundCheckReport:
    """Evaluate every inequality in the chain for one finite instance.

    ``q_prime_cond`` is the classifier-induced conditional Q'_{Y|X}, one
    simplex row per feature atom.
    """
    if p_joint.table.shape != q_joint.table.shape:
        raise DivergenceInputError("P and Q joints must share a support")
    K = p_joint.K
    if transition.K != K:
        raise DivergenceInputError("transition matrix size does not match K")
    q_prime_cond = np.asarray(q_prime_cond, dtype=np.float64)
    if q_prime_cond.shape != p_joint.table.shape:
        raise DivergenceInputError("Q'_{Y|X} must have one row per feature atom")

    M = transition.matrix
    m_inv_inf = inf_norm_inverse(transition)

    p_cond, p_x, p_zero = conditional_tables(p_joint)
    q_cond, q_x, q_zero = conditional_tables(q_joint)
    zero_mass = bool(p_zero.any() or q_zero.any())

    # complementary conditionals implied through M
    p_bar_cond = p_cond @ M
    q_prime_bar_cond = q_prime_cond @ M

    # hybrid joint P_{Y|X} Q_X
    hybrid = p_cond * q_x[:, None]

    tv_joint = tv(p_joint.table, q_joint.table)
    tv_p_hybrid = tv(p_joint.table, hybrid)
    tv_hybrid_q = tv(hybrid, q_joint.table)
    tv_marg = tv(p_x, q_x)
    js_marg = js(p_x, q_x)

    tv_cond_p_qprime = _max_row_tv(p_cond, q_prime_cond)
    tv_cond_bar = _max_row_tv(p_bar_cond, q_prime_bar_cond)
    kl_cond_bar = _max_row_kl(p_bar_cond, q_prime_bar_cond)
    tv_cond_qprime_q = _max_row_tv(q_prime_cond, q_cond)
    kl_cond_qprime_q = _max_row_kl(q_prime_cond, q_cond)

    checks = [
        InequalityCheck("tv_triangle", tv_joint, tv_p_hybrid + tv_hybrid_q),
        # discrete identity: both sides should agree, check both directions
        InequalityCheck("marginal_factor_upper", tv_p_hybrid, tv_marg),
        InequalityCheck("marginal_factor_lower", tv_marg, tv_p_hybrid),
        InequalityCheck("conditional_factor", tv_hybrid_q,
                        _max_row_tv(p_cond, q_cond)),
        InequalityCheck("inversion", tv_cond_p_qprime,
                        m_inv_inf * tv_cond_bar),
        InequalityCheck("pinsker_marginal_js", tv_marg,
                        2.0 * math.sqrt(js_marg)),
        InequalityCheck("pinsker_bar_conditional", tv_cond_bar,
                        math.sqrt(kl_cond_bar / 2.0)
                        if math.isfinite(kl_cond_bar) else math.inf,
                        vacuous=not math.isfinite(kl_cond_bar)),
        InequalityCheck("pinsker_model_conditional", tv_cond_qprime_q,
                        math.sqrt(kl_cond_qprime_q / 2.0)
                        if math.isfinite(kl_cond_qprime_q) else math.inf,
                        vacuous=not math.isfinite(kl_cond_qprime_q)),
    ]

    composite_rhs = 2.0 * math.sqrt(js_marg)
    vacuous = False
    if math.isfinite(kl_cond_bar) and math.isfinite(kl_cond_qprime_q):
        composite_rhs += m_inv_inf * math.sqrt(kl_cond_bar / 2.0)
        composite_rhs += math.sqrt(kl_cond_qprime_q / 2.0)
    else:
        composite_rhs = math.inf
        vacuous = True
    checks.append(InequalityCheck("composite_bound", tv_joint, composite_rhs,
                                  vacuous=vacuous))

    return BoundCheckReport(checks=checks, c1=1.0, c2=1.0,
                            m_inv_inf=m_inv_inf, zero_mass_atoms=zero_mass)
