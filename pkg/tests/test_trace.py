import numpy as np
import pytest

from sclipnet.algorithms import AlgoSpec, run_trajectory
from sclipnet.clipping import Schedule
from sclipnet.trace import COLUMNS, body_of, read_trace

SCHED = Schedule(1.0, 0.3, 0.5, 0.27386127875258304)


@pytest.mark.parametrize("spec", [AlgoSpec("sclip_ef_network", schedule=SCHED), AlgoSpec("dsgd", a=1.0)])
def test_csv_round_trip(tmp_path, small_problem, cycle6, heavy, spec):
    tr = run_trajectory(spec, small_problem, heavy, cycle6, 500, 2, record_every=10)
    path = tmp_path / "trace.csv"
    tr.to_csv(path)
    back = read_trace(path)
    assert back.header == tr.header
    np.testing.assert_array_equal(back.t, tr.t)
    for name in ("gap", "mse", "consensus", "m_inf", "drift_inf", "diverged"):
        np.testing.assert_array_equal(getattr(back, name), getattr(tr, name))
    for k, mon in tr.monitors.items():
        if mon is None:
            assert back.monitors[k] is None
        else:
            np.testing.assert_array_equal(back.monitors[k].ok, mon.ok)
            np.testing.assert_array_equal(back.monitors[k].slack, mon.slack)
    assert body_of(path) == tr.body()
    assert body_of(path).splitlines()[0] == ",".join(COLUMNS)


def test_rejects_unknown_columns(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("t,gap\n0,1\n")
    with pytest.raises(ValueError):
        read_trace(p)
