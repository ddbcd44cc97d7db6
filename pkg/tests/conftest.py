import functools

import pytest

import rdsmg
from rdsmg import cli, loadflow, sizing, swarm
from rdsmg.netmodel import ieee33

_CRITERIA = []
BALANCE_AUDIT = {"checked": 0, "worst_ratio": 0.0}


def _audited(solve):
    """Wrap the load flow so every converged solve in the run is balance-checked.

    Source power must equal net demand plus losses to within ``10 * tol`` in
    both P and Q.
    """

    @functools.wraps(solve)
    def wrapper(network, dg_units=(), slack_v=1.0, tol=1e-6, max_iter=100):
        sol = solve(network, dg_units, slack_v, tol, max_iter)
        if sol.converged:
            demand_p, demand_q = loadflow.net_injection(network, dg_units)
            dp = sol.s_source.real - demand_p.sum() - sol.p_loss_total
            dq = sol.s_source.imag - demand_q.sum() - sol.q_loss_total
            ratio = max(abs(dp), abs(dq)) / tol
            BALANCE_AUDIT["checked"] += 1
            BALANCE_AUDIT["worst_ratio"] = max(BALANCE_AUDIT["worst_ratio"], ratio)
            assert ratio <= 10, f"power balance residual {ratio:.3g} x tol on a converged solve"
        return sol

    return wrapper


_audited_solve = _audited(loadflow.solve)
for _mod in (loadflow, sizing, swarm, cli, rdsmg):
    _mod.solve = _audited_solve


@pytest.fixture(scope="session")
def net33():
    return ieee33()


@pytest.fixture(scope="session")
def base33(net33):
    return loadflow.solve(net33)


@pytest.fixture
def criterion():
    """Record an acceptance criterion outcome, then assert it."""

    def record(label, ok, detail=""):
        _CRITERIA.append((label, bool(ok), detail))
        print(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}")
        assert ok, f"{label}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if BALANCE_AUDIT["checked"]:
        terminalreporter.section("power balance audit")
        terminalreporter.write_line(f"{BALANCE_AUDIT['checked']} converged solves checked, "
                                    f"worst residual {BALANCE_AUDIT['worst_ratio']:.3g} x tol")
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in _CRITERIA:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}")
