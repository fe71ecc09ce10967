import logging
from dataclasses import replace
from itertools import product

import numpy as np

import config
from channels import identity_channel, uniform_prior
from errors import DomainMismatch, Misalignment, SolverError
from interleave import interleave_n, interleave_pair, interleave_sets, interleave_tuple
from measures import prior_vulnerability
from observers import make_observer
from schedulers import (Leaf, compose_tree, explicit_scheduler, replace_secret,
                        replace_subtree, secret_part, subtree, tree_secrets)
from simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, LinearProgram, LPSolution, solve_lp

logger = logging.getLogger(__name__)


def _prior_mass(p, secrets):
    if tuple(p.secrets) == tuple(secrets):
        return np.asarray(p.mass)
    if set(p.secrets) != set(secrets) or len(p.secrets) != len(secrets):
        raise Misalignment("prior does not cover the composed secret set")
    return np.array([p[x] for x in secrets])


def _assemble(secrets, groups, merges, pi_joint, tail_of, views, name, meta):
    """
    One S variable per feasible (source tuple, merge), then one v variable per view.

    pi_joint[x, g]  weight of secret x producing source tuple g
    tail_of(ys)     array [X or 1, len(ys), Z]: probability each merge is finally seen as z
    Rows: sum_k pi_joint[x, g_k] * tail[x, k, z] * S_k - v_z <= 0 for every (x, z),
    and sum of S over each source tuple == 1.
    """
    var_group = np.array([g for g, ms in enumerate(merges) for _ in ms], dtype=int)
    var_trace = [y for ms in merges for y in ms]
    n_s, n_x, n_z = len(var_trace), len(secrets), len(views)

    tail = tail_of(var_trace)
    W = pi_joint[:, var_group][:, None, :] * tail.transpose(0, 2, 1)
    W = np.broadcast_to(W, (n_x, n_z, n_s))

    A_ub = np.hstack([W.reshape(n_x * n_z, n_s), -np.tile(np.eye(n_z), (n_x, 1))])
    A_eq = np.zeros((len(groups), n_s + n_z))
    A_eq[var_group, np.arange(n_s)] = 1.0
    c = np.concatenate([np.zeros(n_s), np.ones(n_z)])

    variables = tuple(("S", groups[g], y) for g, y in zip(var_group, var_trace)) + tuple(("v", z) for z in views)
    return LinearProgram(
        variables=variables, c=c,
        A_ub=A_ub, b_ub=np.zeros(n_x * n_z),
        A_eq=A_eq, b_eq=np.ones(len(groups)),
        ub_labels=tuple(product(secrets, views)), eq_labels=tuple(groups),
        name=name, meta=meta,
    )


def build_min_leakage_lp_n(p, channels, o):
    channels = tuple(channels)
    Ys = [c.outputs for c in channels]
    traces = interleave_n(*Ys).traces
    if set(o.outputs) != set(traces):
        raise DomainMismatch("observer must be defined on the interleavings of the channel outputs")
    obs = o.aligned(traces)
    row = {y: k for k, y in enumerate(traces)}

    groups = tuple(product(*Ys))
    merges = [interleave_tuple(g).traces for g in groups]
    secrets = tuple(product(*(c.secrets for c in channels)))
    joint = np.ones((1, 1))
    for c in channels:
        joint = np.kron(joint, c.matrix)
    pi_joint = _prior_mass(p, secrets)[:, None] * joint

    lp = _assemble(secrets, groups, merges, pi_joint,
                   lambda ys: obs.matrix[[row[y] for y in ys]][None],
                   obs.views, name=f"min-leakage[{', '.join(c.name or '?' for c in channels)}]",
                   meta={"domain": tuple(Ys), "prior": p})
    logger.debug(f"LP: {lp.n_variables} variables, {lp.n_inequalities} + {lp.n_equalities} constraints")
    return lp


def build_min_leakage_lp(p, c1, c2, o):
    return build_min_leakage_lp_n(p, (c1, c2), o)


def scheduler_from_solution(lp, sol, tol=config.EXTRACTION_TOL):
    """Read S variables back into a validated scheduler; rows are renormalised once validated."""
    rows = {}
    for label, value in zip(lp.variables, sol.x):
        if label[0] != "S":
            continue
        rows.setdefault(label[1], {})[label[2]] = max(float(value), 0.0)
    checked = explicit_scheduler(lp.meta["domain"], rows, tol=tol, name="min-leakage")
    exact = {src: {y: m / sum(dist.mass) for y, m in dist.items()} for src, dist in checked.rows.items()}
    return explicit_scheduler(lp.meta["domain"], exact, name="min-leakage")


def dual_lp(lp):
    """
    Dual of an LP built by `_assemble`, again in <= form.

    One row per primal variable (A_eq' z - A_ub' y <= c), one variable per primal
    constraint. Every right-hand side is a cost, so the all-slack basis is feasible.
    Group multipliers z stay nonnegative at the optimum since W >= 0.
    """
    y = tuple(("y", label) for label in lp.ub_labels) or tuple(("y", i) for i in range(lp.n_inequalities))
    z = tuple(("z", label) for label in lp.eq_labels) or tuple(("z", i) for i in range(lp.n_equalities))
    return LinearProgram(
        variables=y + z,
        c=np.concatenate([np.zeros(lp.n_inequalities), -lp.b_eq]),
        A_ub=np.hstack([-lp.A_ub.T, lp.A_eq.T]), b_ub=lp.c,
        name=f"dual {lp.name}",
    )


def _polish(lp, x):
    """Scale S to sum to one per source tuple, then set each v to its tightest feasible value."""
    x = np.clip(x, 0.0, None)
    in_group = lp.A_eq != 0
    for cols in in_group:
        total = x[cols].sum()
        if total < 0.5:
            raise SolverError(f"{lp.name}: source tuple got total mass {total:.3g}")
        x[cols] /= total
    s_cols = in_group.any(axis=0)
    load = lp.A_ub[:, s_cols] @ x[s_cols]
    for j in np.nonzero(~s_cols)[0]:
        rows = lp.A_ub[:, j] < 0
        x[j] = max(0.0, float(np.max(load[rows] / -lp.A_ub[rows, j]))) if rows.any() else 0.0
    return x


def solve_min_leakage_lp(lp):
    """
    Solve a min-leakage LP in whichever form has the smaller basis.

    Through the dual, the S values are the dual's row multipliers.
    """
    if lp.n_variables >= lp.n_inequalities + lp.n_equalities:
        sol = solve_lp(lp)
        if sol.status != OPTIMAL:
            return sol
        x, bound = _polish(lp, sol.x), sol.objective
    else:
        sol = solve_lp(dual_lp(lp))
        if sol.status == UNBOUNDED:
            return LPSolution(INFEASIBLE, iterations=sol.iterations)
        if sol.status == INFEASIBLE:
            return LPSolution(UNBOUNDED, iterations=sol.iterations)
        x, bound = _polish(lp, sol.ub_duals), -sol.objective

    objective = float(lp.c @ x)
    if abs(objective - bound) > config.FEASIBILITY_TOL * max(1.0, objective):
        logger.warning(f"⚠️ {lp.name}: polished objective {objective:.9f} vs solver bound {bound:.9f}")
    return LPSolution(OPTIMAL, objective, x, sol.iterations)


def _solve_for_mel(lp, p):
    logger.info(f"🔍 Solving {lp.name}: {lp.n_variables} variables, "
                f"{lp.n_inequalities + lp.n_equalities} constraints")
    sol = solve_min_leakage_lp(lp)
    try:
        sol.raise_for_status()
    except SolverError as e:
        raise SolverError(f"min-leakage LP should always be feasible and bounded: {e}") from e
    if sol.objective <= 0:
        raise SolverError(f"min-leakage LP returned non-positive objective {sol.objective}")
    mel = float(np.log2(sol.objective) - np.log2(prior_vulnerability(p)))
    logger.info(f"✅ Optimum after {sol.iterations} pivots: objective {sol.objective:.6f}, MEL {mel:.4f}")
    return sol, mel


def min_leakage_scheduler_n(p, channels, o):
    lp = build_min_leakage_lp_n(p, channels, o)
    sol, mel = _solve_for_mel(lp, p)
    return scheduler_from_solution(lp, sol), mel


def min_leakage_scheduler(p, c1, c2, o):
    return min_leakage_scheduler_n(p, (c1, c2), o)


def min_capacity_scheduler_n(channels, o):
    """At the uniform prior the minimised leakage is the minimised min-capacity."""
    secrets = tuple(product(*(c.secrets for c in channels)))
    return min_leakage_scheduler_n(uniform_prior(secrets), channels, o)


def min_capacity_scheduler(c1, c2, o):
    return min_capacity_scheduler_n((c1, c2), o)


# --- ONE NODE OF A TREE ---

def build_min_leakage_slot_lp(prior, tree, path, observer):
    """LP for the scheduler of the node at `path`, every other node fixed."""
    path = tuple(path)
    node = subtree(tree, path)
    left, right = compose_tree(node.left), compose_tree(node.right)
    slot = interleave_sets(left.outputs, right.outputs).traces
    outer = compose_tree(replace_subtree(tree, path, Leaf(identity_channel(slot, name="slot"))))
    if isinstance(observer, str):
        observer = make_observer(observer, outer.outputs)
    seen = observer.aligned(outer.outputs)
    seen_rows = outer.matrix @ seen.matrix
    outer_row = {x: i for i, x in enumerate(outer.secrets)}

    secrets = tree_secrets(tree)
    groups = tuple(product(left.outputs, right.outputs))
    merges = [interleave_pair(y1, y2).traces for y1, y2 in groups]
    pi = _prior_mass(prior, secrets)
    parts = [secret_part(x, path) for x in secrets]
    pi_joint = np.array([
        pi[i] * np.kron(left.matrix[left.secret_index[xl]], right.matrix[right.secret_index[xr]])
        for i, (xl, xr) in enumerate(parts)
    ])

    def tail_of(ys):
        return np.stack([seen_rows[[outer_row[replace_secret(x, path, y)] for y in ys]] for x in secrets])

    return _assemble(secrets, groups, merges, pi_joint, tail_of, seen.views,
                     name=f"min-leakage slot {'/'.join(path) or 'root'}",
                     meta={"domain": (left.outputs, right.outputs), "prior": prior})


def min_leakage_slot(prior, tree, path, observer):
    """
    Synthesize the scheduler of the node at `path` with every other node fixed.

    Returns (tree with that scheduler filled in, scheduler, observed MEL).
    """
    lp = build_min_leakage_slot_lp(prior, tree, path, observer)
    sol, mel = _solve_for_mel(lp, prior)
    s = scheduler_from_solution(lp, sol)
    node = subtree(tree, tuple(path))
    return replace_subtree(tree, tuple(path), replace(node, scheduler=s)), s, mel
