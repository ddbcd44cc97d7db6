"""Small network factories for tests."""

import numpy as np

from rdsmg.netmodel import BranchRecord, BusRecord, Network


def chain(n, r=0.5, x=0.4, p=200.0, q=100.0, v_base=12.66, s_base=100.0):
    """Uniform n-bus chain with the same load on every bus but the source."""
    buses = [BusRecord(1, 0.0, 0.0)] + [BusRecord(i, p, q) for i in range(2, n + 1)]
    branches = [BranchRecord(i - 1, i, r, x) for i in range(2, n + 1)]
    return Network(tuple(buses), tuple(branches), v_base, s_base)


def two_bus(r_pu, x_pu, p_pu, q_pu, s_base=100.0, v_base=12.66):
    """Single-branch network specified directly in per-unit."""
    zb = (v_base * 1e3) ** 2 / (s_base * 1e6)
    s_kw = s_base * 1e3
    buses = (BusRecord(1, 0.0, 0.0), BusRecord(2, p_pu * s_kw, q_pu * s_kw))
    return Network(buses, (BranchRecord(1, 2, r_pu * zb, x_pu * zb),), v_base, s_base)


def random_tree(rng, n, max_load_kw=400.0, max_z_ohm=1.0, shuffle=True):
    """Random radial network on ``n`` buses rooted at bus 1.

    Bus labels other than the root are permuted so numbering carries no
    topological meaning.
    """
    labels = list(range(2, n + 1))
    if shuffle:
        rng.shuffle(labels)
    order = [1] + labels
    branches = []
    for k in range(1, n):
        parent = order[int(rng.integers(0, k))]
        r = float(rng.uniform(0.05, max_z_ohm))
        x = float(rng.uniform(0.05, max_z_ohm))
        branches.append(BranchRecord(parent, order[k], r, x))
    buses = [BusRecord(1, 0.0, 0.0)]
    buses += [BusRecord(i, float(rng.uniform(0, max_load_kw)), float(rng.uniform(0, max_load_kw)))
              for i in range(2, n + 1)]
    return Network(tuple(buses), tuple(branches))


def edges(network):
    return [(b.from_bus, b.to_bus) for b in network.branches]


__all__ = ["chain", "two_bus", "random_tree", "edges", "np"]
