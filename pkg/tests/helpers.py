"""Shared instance builders and oracles for the test suite."""

import numpy as np

from tclinv.abstraction import AbstractionSpec, GroupDynamics
from tclinv.aggregate import build_graph, build_matrices, step_aggregate
from tclinv.fleet import disaggregate, fleet_histogram, init_fleet, step_fleet


def table_spec(succ, safe=None, gid=0, eta=1.0, cell0=20):
    succ = np.asarray(succ, dtype=np.int64)
    K = succ.shape[1]
    safe = np.ones(K, dtype=bool) if safe is None else np.asarray(safe, dtype=bool)
    return AbstractionSpec(eta=eta, eps=1.0, delta=2.0, cell0=cell0, succ=succ,
                           clamped=np.zeros_like(succ, dtype=bool), safe=safe, gid=gid)


def table_group(tau_bar, N, gid=0):
    """Thermal parameters paired with a table abstraction in fleet tests."""
    return GroupDynamics(a=0.9, T_a=32.0, R=2.0, p_tr=10.0, deadband=(20.0, 27.0),
                         domain=(15.0, 35.0), tau_bar=tau_bar, N=N, gid=gid)


def random_fleet_instance(rng, K_max=6, N_max=10):
    """Random successor table, lockouts and aggregate state with N <= N_max."""
    K = int(rng.integers(1, K_max + 1))
    succ = rng.integers(0, K, size=(2, K))
    tau_bar = tuple(int(t) for t in rng.integers(0, 4, size=2))
    N = int(rng.integers(1, N_max + 1))
    spec = table_spec(succ)
    g = table_group(tau_bar, N)
    G = build_graph(spec, g)
    x = np.zeros(G.D_x, dtype=np.int64)
    np.add.at(x, rng.integers(0, G.D_x, size=N), 1)
    return g, spec, G, x


def random_input(rng, G, x, p=0.5):
    """Admissible input switching a random share of every unlocked bucket."""
    u = np.zeros(G.D_u, dtype=np.int64)
    for m in range(G.M):
        for k in range(G.K):
            n = int(x[G.node(m, 0, k)])
            if n and rng.random() < p:
                u[G.input_index(m, 1 - m, k)] = int(rng.integers(0, n + 1))
    return u


def fleet_matches_aggregate(seed, steps=30):
    """Drive a fleet and the aggregate model with the same random inputs."""
    rng = np.random.default_rng(seed)
    g, spec, G, x = random_fleet_instance(rng)
    mats = build_matrices(G)
    fleet = init_fleet([g], [spec], [G], [x])
    if not np.array_equal(fleet_histogram(fleet, [G])[0], x):
        return False
    for _ in range(steps):
        u = random_input(rng, G, x)
        cmds = disaggregate([x], [u], fleet, [G], rng)
        fleet = step_fleet(fleet, cmds)
        x = step_aggregate(G, x, u, matrices=mats)
        if not np.array_equal(fleet_histogram(fleet, [G])[0], x):
            return False
    return True
