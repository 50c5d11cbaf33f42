import hashlib

import pytest

from manetsim import cli
from manetsim.harness import (ConfigError, MatrixSpec, Protocol, RunConfig, config_from_mapping,
                              parse_config_text, result_row, run_configs, run_matrix, run_single,
                              simulate, build_inputs, write_plot_data)
from manetsim.metrics import RESULTS_HEADER, read_results
from manetsim.mobility import MobilityModel, MobilityParams, Scenario
from manetsim.traffic import read_connections

RW = MobilityModel.RANDOM_WALK
RWP = MobilityModel.RANDOM_WAYPOINT


def small(protocol=Protocol.AODV, seed=3, model=RWP, pause=0.0, n=10, duration=60.0):
    return RunConfig(protocol, MobilityParams(model, 0.0, 10.0, pause), n,
                     duration=duration, conn_fraction=0.2, seed=seed)


def test_zero_duration_rejected():
    with pytest.raises(ConfigError) as err:
        config_from_mapping({"duration": "0"})
    assert err.value.field == "duration"


@pytest.mark.parametrize("settings,field", [
    ({"nodes": "1"}, "nodes"), ({"conn_frac": "0"}, "conn_frac"),
    ({"mobility": "RW", "pause": "25"}, "mobility"), ({"nodes": "ten"}, "nodes"),
    ({"range": "-5"}, "link"), ({"speed_min": "20", "speed_max": "10"}, "mobility"),
])
def test_invalid_settings_name_the_field(settings, field):
    with pytest.raises(ConfigError) as err:
        config_from_mapping(settings)
    assert err.value.field == field


def test_unknown_protocol():
    with pytest.raises(ValueError):
        config_from_mapping({"protocol": "OLSR"})


def test_config_defaults():
    cfg = config_from_mapping({})
    assert (cfg.n_nodes, cfg.duration, cfg.conn_fraction) == (50, 200.0, 0.2)
    assert cfg.link.range == 250.0 and cfg.area.width == 670.0
    assert cfg.mobility.pause_time == 25.0
    assert config_from_mapping({"mobility": "RW"}).mobility.pause_time == 0.0


def test_config_file_parsing():
    text = "# one cell\nprotocol = DSR\nmobility=RW\nnodes = 10  # small\nspeed-max = 50\n"
    cfg = config_from_mapping(parse_config_text(text))
    assert cfg.protocol is Protocol.DSR and cfg.n_nodes == 10
    assert cfg.mobility.model is RW and cfg.mobility.speed_max == 50.0
    with pytest.raises(ConfigError):
        parse_config_text("colour = blue\n")


def test_same_config_same_trace():
    cfg = small()
    assert run_single(cfg).tracer.digest() == run_single(cfg).tracer.digest()


def test_different_seeds_differ():
    assert run_single(small(seed=1)).tracer.digest() != run_single(small(seed=2)).tracer.digest()


def test_trace_file_matches_digest(tmp_path):
    path = tmp_path / "a.tr"
    res = run_single(small(Protocol.DSR), trace_path=path)
    assert hashlib.sha256(path.read_bytes()).hexdigest() == res.tracer.digest()


def test_parallel_results_equal_serial():
    cfgs = [small(p, seed=s) for p in Protocol for s in (1, 2)]
    serial = run_configs(cfgs, jobs=1, want_digest=True)
    parallel = run_configs(cfgs, jobs=2, want_digest=True)
    assert [o.digest for o in serial] == [o.digest for o in parallel]
    assert [o.row for o in serial] == [o.row for o in parallel]


def test_default_matrix_size():
    spec = MatrixSpec()
    assert len(spec.configs()) == 3 * 2 * 2 * 2 * 2 * 20 == 960
    seeds = {c.seed for c in spec.configs()}
    assert len(seeds) == 16 * 20


def test_protocols_share_seeds_within_cell():
    cfgs = MatrixSpec(replicates=2).configs()
    assert [c.seed for c in cfgs[:3]] == [1, 1, 1]
    assert [c.protocol for c in cfgs[:3]] == list(Protocol)


def test_single_cell_matrix_matches_run_single():
    spec = MatrixSpec(protocols=(Protocol.DSR,), mobilities=((RWP, 25.0),), nodes=(10,),
                      speeds=(10.0,), fractions=(0.2,), replicates=1, seed_base=7,
                      duration=60.0)
    res = run_matrix(spec)
    cfg = spec.configs()[0]
    assert res.rows == [result_row(cfg, run_single(cfg).metrics)]
    assert res.failures == []


def test_failed_run_reported_not_fatal(monkeypatch):
    import manetsim.harness as h
    real = h.run_single

    def flaky(cfg, trace_path=None, observer=None):
        if cfg.seed == 666:
            raise RuntimeError("boom")
        return real(cfg, trace_path, observer)

    monkeypatch.setattr(h, "run_single", flaky)
    outcomes = run_configs([small(seed=666, duration=10.0), small(duration=10.0)])
    assert outcomes[0].row is None and "boom" in outcomes[0].error
    assert outcomes[1].row is not None and outcomes[1].error is None


def test_plot_data_files(tmp_path):
    spec = MatrixSpec(mobilities=((RW, 0.0),), nodes=(5, 8), speeds=(10.0,), fractions=(0.4,),
                      replicates=1, duration=30.0)
    res = run_matrix(spec)
    files = write_plot_data(res.summary, tmp_path)
    names = {f.name for f in files}
    assert "pdr_RandomWalk_p0_c0.4_vs_nodes_speed10.dat" in names
    lines = (tmp_path / "nro_RandomWalk_p0_c0.4_vs_speed_nodes8.dat").read_text().splitlines()
    assert lines[0] == "# speed_max DSDV DSR AODV"
    assert lines[1].split()[0] == "10"


# -- command line ----------------------------------------------------------------


def test_cli_run_writes_csv_and_trace(tmp_path, capsys):
    out, trace = tmp_path / "r.csv", tmp_path / "r.tr"
    code = cli.main(["run", "--protocol", "DSR", "--nodes", "10", "--mobility", "RW",
                     "--duration", "50", "--seed", "4", "--out", str(out), "--trace", str(trace)])
    assert code == 0
    rows = read_results(out)
    assert len(rows) == 1 and rows[0].protocol == "DSR" and rows[0].nodes == 10
    assert capsys.readouterr().out.splitlines()[0] == RESULTS_HEADER
    assert trace.read_text().strip()


def test_cli_validation_error_exit_code(capsys):
    assert cli.main(["run", "--duration", "0"]) == 2
    assert "duration" in capsys.readouterr().err


def test_cli_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("protocol = DSDV\nnodes = 6\nduration = 40\nmobility = RWP\n")
    out = tmp_path / "r.csv"
    assert cli.main(["run", "--config", str(cfg), "--protocol", "AODV", "--out", str(out)]) == 0
    row = read_results(out)[0]
    assert (row.protocol, row.nodes) == ("AODV", 6)


def test_cli_scenario_and_connection_files_reproduce_run(tmp_path):
    sc, cn = tmp_path / "s.txt", tmp_path / "c.txt"
    flags = ["--nodes", "8", "--duration", "60", "--seed", "5", "--mobility", "RWP"]
    assert cli.main(["scenario", *flags, "--out", str(sc)]) == 0
    assert cli.main(["connections", *flags, "--out", str(cn)]) == 0
    cfg = config_from_mapping({"nodes": "8", "duration": "60", "seed": "5"})
    scenario, conns = build_inputs(cfg)
    assert sc.read_text() == scenario.to_text()
    assert [(c.src, c.dst) for c in read_connections(cn)] == [(c.src, c.dst) for c in conns]
    out = tmp_path / "r.csv"
    assert cli.main(["run", *flags, "--scenario", str(sc), "--connections", str(cn),
                     "--out", str(out)]) == 0
    ref = simulate(cfg.protocol, Scenario.read(sc, cfg.area, 60.0), read_connections(cn),
                   60.0, cfg.link, 5).metrics
    row = read_results(out)[0]
    assert (row.sent, row.received, row.routing_tx) == (ref.sent, ref.received, ref.routing_tx)


def test_cli_matrix_small(tmp_path, capsys):
    out, summ, plots = tmp_path / "m.csv", tmp_path / "s.csv", tmp_path / "plots"
    code = cli.main(["matrix", "--nodes-axis", "6", "--speed-axis", "10", "--frac-axis", "0.4",
                     "--seeds", "2", "--duration", "30", "--out", str(out),
                     "--summary", str(summ), "--plot-data", str(plots)])
    assert code == 0
    assert len(read_results(out)) == 3 * 2 * 2
    assert len(summ.read_text().splitlines()) == 1 + 3 * 2
    assert any(plots.iterdir())
