"""Brute-force reference solutions used to check the production code."""
from __future__ import annotations

import itertools

import numpy as np

from humidmpc.forecast import ForecastBundle
from humidmpc.lp import LinearProgram


def random_bounded_lp(rng, n=None):
    """A feasible LP over a finite box, so an optimal vertex always exists."""
    n = int(rng.integers(2, 7)) if n is None else n
    m_ub = int(rng.integers(1, 5))
    m_eq = int(rng.integers(0, min(2, n - 1) + 1))
    lb = rng.uniform(-5.0, 0.0, n)
    ub = rng.uniform(1.0, 6.0, n)
    x0 = lb + (ub - lb) * rng.uniform(0.2, 0.8, n)
    A_ub = rng.normal(size=(m_ub, n))
    b_ub = A_ub @ x0 + rng.uniform(0.1, 2.0, m_ub)
    A_eq = rng.normal(size=(m_eq, n))
    b_eq = A_eq @ x0
    return LinearProgram(c=rng.normal(size=n), A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, lb=lb, ub=ub)


def vertex_minimum(lp: LinearProgram, tol=1e-9):
    """Minimum objective over all basic feasible points of a box-bounded LP."""
    n = lp.n_vars
    G = np.vstack([lp.A_ub, -np.eye(n), np.eye(n)])
    h = np.concatenate([lp.b_ub, -lp.lb, lp.ub])
    k = n - lp.n_eq
    combos = np.array(list(itertools.combinations(range(len(h)), k)), dtype=int).reshape(-1, k)
    M = np.concatenate([np.broadcast_to(lp.A_eq, (len(combos),) + lp.A_eq.shape), G[combos]], axis=1)
    rhs = np.concatenate([np.broadcast_to(lp.b_eq, (len(combos), lp.n_eq)), h[combos]], axis=1)
    ok = np.abs(np.linalg.det(M)) > 1e-10
    x = np.linalg.solve(M[ok], rhs[ok][..., None])[..., 0]
    feasible = np.all(x @ G.T <= h + tol, axis=1)
    if lp.n_eq:
        feasible &= np.all(np.abs(x @ lp.A_eq.T - lp.b_eq) <= tol, axis=1)
    if not feasible.any():
        raise ValueError("no feasible vertex")
    return float(np.min(x[feasible] @ lp.c) + lp.constant)


def mpc_objective(config, bundle: ForecastBundle, t0, Q, mode):
    """Plan cost for each row of cooling sequences ``Q``; inf where infeasible.

    Every other plan variable follows from Q: temperatures from the dynamics,
    power from the equipment ratio, and the epigraph variables at their
    smallest admissible values.
    """
    p = config.params
    a, R, dt = p.alpha, p.r_eff, config.dt
    Q = np.atleast_2d(Q)
    T = np.empty_like(Q)
    prev = np.full(len(Q), float(t0))
    for k in range(Q.shape[1]):
        prev = a * prev + (1 - a) * (bundle.t_eq[k] + R * (bundle.q_e[k] - Q[:, k]))
        T[:, k] = prev
    P = Q / (bundle.shr * bundle.cop)
    cost = dt * config.pi_e * P.sum(1) + config.pi_d * P.max(1) + dt * config.pi_t * np.abs(T - config.t_pref).sum(1)
    if mode == "power_limit":
        lim = np.minimum(bundle.p_lim, config.p_hp_max)
        cost += dt * config.pi_peak * np.maximum(P - lim, 0.0).sum(1)
    bad = (np.abs(T - config.t_pref) > config.delta + 1e-12).any(1) | (P > config.p_hp_max + 1e-12).any(1)
    cost[bad] = np.inf
    return cost


def _cooling_from_temperatures(config, bundle, t0, T):
    """Invert the dynamics: cooling sequences that produce temperature rows ``T``."""
    p = config.params
    a, R = p.alpha, p.r_eff
    prev = np.concatenate([np.full((len(T), 1), float(t0)), T[:, :-1]], axis=1)
    return bundle.q_e + (bundle.t_eq - (T - a * prev) / (1 - a)) / R


def _zoom(cost_of, lo, hi, points, rounds):
    L = len(lo)
    lo0, hi0 = lo.copy(), hi.copy()
    best_x, best = None, np.inf
    for _ in range(rounds):
        axes = [np.linspace(lo[k], hi[k], points) for k in range(L)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, L)
        cost = cost_of(grid)
        i = int(np.argmin(cost))
        if cost[i] < best:
            best, best_x = float(cost[i]), grid[i]
        if best_x is None:
            break
        span = (hi - lo) / (points - 1) * 3.0
        lo, hi = np.maximum(best_x - span, lo0), np.minimum(best_x + span, hi0)
    return best, best_x


def mpc_grid_minimum(config, bundle, t0, mode, points=41, rounds=14):
    """Zooming grid search over feasible plans (the plan cost is convex).

    Two parametrizations are searched, cooling sequences and temperature
    sequences, and the better result is returned as (cost, cooling). Bounds
    that are diagonal in one coordinate system are axis-aligned in the other,
    which keeps the zoom from stalling on a thin feasible wedge.
    """
    L = config.horizon_l
    q_max = config.p_hp_max * bundle.cop
    by_q = _zoom(lambda Q: mpc_objective(config, bundle, t0, Q, mode), np.zeros(L), q_max.copy(), points, rounds)

    def by_temperature(T):
        Q = _cooling_from_temperatures(config, bundle, t0, T)
        cost = mpc_objective(config, bundle, t0, np.clip(Q, 0.0, None), mode)
        cost[((Q < -1e-12) | (Q > q_max + 1e-12)).any(1)] = np.inf
        return cost

    band = np.full(L, config.delta)
    by_t = _zoom(by_temperature, config.t_pref - band, config.t_pref + band, points, rounds)
    if by_t[0] < by_q[0]:
        return by_t[0], _cooling_from_temperatures(config, bundle, t0, by_t[1][None, :])[0]
    return by_q


def dense_gp_posterior(X, y, Xs, ls, sf2, sn2):
    """GP posterior by explicit inversion; targets centred on their mean."""
    def k(A, B):
        d = (A[:, None, :] - B[None, :, :]) / ls
        return sf2 * np.exp(-0.5 * (d**2).sum(-1))

    K = k(X, X) + sn2 * np.eye(len(X))
    Kinv = np.linalg.inv(K)
    Ks = k(Xs, X)
    mean = y.mean() + Ks @ Kinv @ (y - y.mean())
    var = sf2 - np.einsum("ij,jk,ik->i", Ks, Kinv, Ks)
    return mean, var
