import csv
import io
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from manetsim.link import PacketType
from manetsim.metrics import (EmptyAggregateError, NoDeliveriesError, NoTrafficError,
                              RESULTS_HEADER, ResultRow, RunMetrics, TraceRecord, Tracer,
                              aggregate, compute_nro, compute_pdr, compute_throughput,
                              read_results, read_trace, summary_csv, write_results)

DATA = PacketType.CBR_DATA


def synthetic_trace(sent, received, control):
    tr = Tracer()
    for i in range(sent):
        tr.log(float(i), "s", 0, "AGT", DATA, i, 512)
        tr.log(float(i), "s", 0, "RTR", DATA, i, 512)
    for i in range(received):
        tr.log(float(i) + 0.5, "r", 1, "AGT", DATA, i, 512)
    for i in range(control):
        tr.log(float(i), "s" if i % 2 else "f", 2, "RTR", PacketType.AODV_RREQ, 10_000 + i, 24)
    return tr.records


def test_pdr_ratio():
    assert compute_pdr(synthetic_trace(100, 90, 0)) == 0.9


def test_pdr_all_delivered():
    assert compute_pdr(synthetic_trace(40, 40, 3)) == 1.0


def test_pdr_without_traffic():
    with pytest.raises(NoTrafficError):
        compute_pdr(synthetic_trace(0, 0, 5))


def test_nro_ratio():
    assert compute_nro(synthetic_trace(60, 50, 200)) == 4.0


def test_nro_without_deliveries():
    with pytest.raises(NoDeliveriesError):
        compute_nro(synthetic_trace(10, 0, 5))


def test_data_forwarding_is_not_overhead():
    recs = synthetic_trace(5, 5, 0) + [TraceRecord(1.0, "f", 3, "RTR", DATA, 1, 512)]
    assert compute_nro(recs) == 0.0


def test_throughput():
    assert compute_throughput(synthetic_trace(400, 400, 0), 200.0) == 2.0
    assert compute_throughput(synthetic_trace(10, 0, 0), 200.0) == 0.0


@given(st.integers(1, 500), st.data(), st.integers(0, 1000),
       st.floats(1.0, 1000.0, allow_nan=False))
def test_throughput_is_pdr_times_rate(sent, data, control, duration):
    received = data.draw(st.integers(0, sent))
    m = RunMetrics.from_trace(synthetic_trace(sent, received, control), duration)
    assert m.pdr_exact * m.sent / Fraction(duration) == Fraction(m.received) / Fraction(duration)
    assert m.throughput == pytest.approx(m.pdr * m.sent / duration, rel=1e-12)


def test_trace_line_round_trip(tmp_path):
    tr = Tracer()
    tr.log(1.25, "s", 3, "RTR", PacketType.DSR_RREQ, 17, 24)
    tr.log(2.0, "r", 4, "AGT", DATA, 18, 512)
    assert tr.text() == ("1.250000 s 3 RTR DSR-RREQ 17 24\n"
                         "2.000000 r 4 AGT CBR-DATA 18 512\n")
    path = tmp_path / "run.tr"
    tr.write(path)
    assert read_trace(path) == tr.records


def test_single_run_aggregate_has_no_stddev():
    agg = aggregate([RunMetrics(10, 8, 20, 200.0)])
    assert agg["pdr"].mean == 0.8 and agg["pdr"].stddev is None and agg["pdr"].n == 1


def test_aggregate_mean():
    agg = aggregate([RunMetrics(10, 8, 4, 100.0), RunMetrics(10, 10, 4, 100.0)])
    assert agg["pdr"].mean == pytest.approx(0.9)


def test_aggregate_empty():
    with pytest.raises(EmptyAggregateError):
        aggregate([])


def test_undefined_metrics_skipped():
    agg = aggregate([RunMetrics(0, 0, 5, 100.0), RunMetrics(10, 5, 5, 100.0)])
    assert agg["pdr"].n == 1 and agg["nro"].n == 1 and agg["throughput"].n == 2


def rows_for_cell(n=20):
    rng = np.random.default_rng(5)
    rows = []
    for seed in range(1, n + 1):
        sent = int(rng.integers(50, 400))
        recv = int(rng.integers(0, sent + 1))
        ctl = int(rng.integers(0, 3000))
        m = RunMetrics(sent, recv, ctl, 200.0)
        rows.append(ResultRow("AODV", "RandomWaypoint", 50, 10.0, 25.0, 0.2, seed, sent, recv,
                              ctl, m.pdr, m.nro, m.throughput))
    return rows


def test_results_csv_round_trip(tmp_path):
    rows = rows_for_cell()
    rows.append(ResultRow("DSR", "RandomWalk", 10, 10.0, 0.0, 0.2, 99, 0, 0, 0, None, None, 0.0))
    path = tmp_path / "results.csv"
    write_results(path, rows)
    assert path.read_text().splitlines()[0] == RESULTS_HEADER
    assert read_results(path) == rows
    assert path.read_text().splitlines()[-1].endswith(",NA,NA,0.0")


def test_cell_summary_matches_independent_recomputation(tmp_path):
    rows = rows_for_cell()
    path = tmp_path / "results.csv"
    write_results(path, rows)
    with open(path) as fh:
        table = list(csv.DictReader(fh))
    pdr = np.array([float(r["pdr"]) for r in table])
    nro = np.array([float(r["nro"]) for r in table if r["nro"] != "NA"])
    key = ("AODV", "RandomWaypoint", 50, 10.0, 25.0, 0.2)
    text = summary_csv({key: aggregate([r.metrics(200.0) for r in read_results(path)])})
    out = list(csv.DictReader(io.StringIO(text)))
    assert len(out) == 1
    assert float(out[0]["pdr_mean"]) == pytest.approx(pdr.mean(), rel=1e-12)
    assert float(out[0]["pdr_std"]) == pytest.approx(pdr.std(ddof=1), rel=1e-12)
    assert float(out[0]["nro_mean"]) == pytest.approx(nro.mean(), rel=1e-12)
    assert int(out[0]["runs"]) == 20
