"""Harness tests: config, runners, reports, CLI, reproducibility."""
import csv

import pytest

from romano import codec
from romano.harness import report
from romano.harness.cli import main
from romano.harness.config import (ConfigError, ScenarioConfig, build_config,
                                   parse_scenario_text)
from romano.harness.demos import DEMOS, run_group_control
from romano.harness.experiments import (decode_probe, encode_probe,
                                        linear_fit, publish_times,
                                        run_scalability, run_throughput)
from romano.harness.world import World, WorldNotReady, robot_addr
from romano.node import READY


class TestConfig:
    def test_defaults(self):
        assert build_config() == ScenarioConfig()

    def test_scenario_text_parsing(self):
        text = """
        # comment and blank lines are ignored

        seed = 42
        rate_mps = 12.5
        radio_buffer_capacity = 0x20
        bridge_topics = alpha, beta
        """
        overrides = parse_scenario_text(text)
        assert overrides == {"seed": 42, "rate_mps": 12.5,
                             "radio_buffer_capacity": 32,
                             "bridge_topics": "alpha, beta"}
        cfg = build_config(overrides)
        assert cfg.seed == 42
        assert cfg.bridge_topic_list() == ("alpha", "beta")

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_scenario_text("robots = 4")

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match="key = value"):
            parse_scenario_text("just words")

    def test_bad_value(self):
        with pytest.raises(ConfigError, match="bad value"):
            parse_scenario_text("seed = many")

    def test_cli_overrides_file(self):
        cfg = build_config({"seed": 3, "n_robots": 7},
                           {"seed": 9, "n_robots": None})
        assert cfg.seed == 9       # CLI wins
        assert cfg.n_robots == 7   # None means "flag not given"

    @pytest.mark.parametrize("overrides", [
        {"n_robots": 0},
        {"payload_octets": 13},
        {"payload_octets": 256},
        {"latency_lo_us": 30_000, "latency_hi_us": 20_000},
        {"loss_prob": 1.0},
        {"loss_prob": -0.1},
        {"rate_mps": 0.0},
    ])
    def test_validation(self, overrides):
        with pytest.raises(ConfigError):
            build_config(overrides)


class TestProbeMath:
    def test_probe_roundtrip_and_size(self):
        raw = encode_probe(7, 123_456_789, 32)
        assert len(raw) == 32
        msg = codec.decode_message(raw)
        assert decode_probe(msg.data) == (7, 123_456_789)

    def test_minimum_probe(self):
        raw = encode_probe(0xFFFFFFFF, 2**63, 14)
        assert len(raw) == 14
        assert decode_probe(codec.decode_message(raw).data) == (0xFFFFFFFF,
                                                                2**63)

    def test_publish_times_even_rate(self):
        assert publish_times(1000, 400.0, 3) == [1000, 3500, 6000]

    def test_publish_times_rounds_fractions(self):
        assert publish_times(0, 3.0, 4) == [0, 333333, 666667, 1000000]

    def test_linear_fit_exact(self):
        xs = [1.0, 2.0, 3.0, 4.0]
        slope, intercept, r2 = linear_fit(xs, [3 * x + 7 for x in xs])
        assert (slope, intercept, r2) == pytest.approx((3.0, 7.0, 1.0))

    def test_linear_fit_imperfect(self):
        _, _, r2 = linear_fit([1.0, 2.0, 3.0], [1.0, 3.0, 2.0])
        assert r2 < 1.0

    def test_linear_fit_rejects_degenerate(self):
        with pytest.raises(ValueError):
            linear_fit([1.0], [2.0])
        with pytest.raises(ValueError):
            linear_fit([2.0, 2.0], [1.0, 5.0])


class TestWorld:
    def test_world_comes_up(self):
        cfg = ScenarioConfig(n_robots=3, seed=5)
        world = World(cfg)
        world.run_ready()
        assert all(node.phase == READY for node in world.nodes)
        assert world.server.running
        assert [n.romano_id for n in world.nodes] == ["00100001", "00100002",
                                                      "00100003"]
        # every robot observes the broadcast topic; with jittered links
        # the join order races, so only membership is guaranteed
        assert set(world.broker.subscribers(codec.TOPIC_COMMON)) == {
            robot_addr(i) for i in range(1, 4)}

    def test_unreachable_deadline(self):
        cfg = ScenarioConfig(n_robots=2, ready_deadline_us=1)
        with pytest.raises(WorldNotReady):
            World(cfg).run_ready()


SMALL = ScenarioConfig(n_robots=3, rate_mps=100.0, n_messages=50, seed=7)


class TestThroughput:
    def test_clean_run_delivers_everything(self):
        res = run_throughput(SMALL)
        assert res.published == 50
        assert [r.received for r in res.per_robot] == [50, 50, 50]
        assert res.delivery_ratio == 1.0
        assert res.conservation_ok
        assert res.overflow_onset is None
        assert res.buffer_dropped == 0 and res.link_dropped == 0
        lo, hi = SMALL.latency_lo_us, SMALL.latency_hi_us
        for stats in res.per_robot:
            worst = hi + (SMALL.n_robots - 1) * SMALL.dispatch_interval_us
            assert min(stats.delays) >= lo
            assert max(stats.delays) <= worst

    def test_lossy_links_conserve_copies(self):
        cfg = SMALL.replace(loss_prob=0.2, n_messages=200, rate_mps=50.0,
                            seed=3)
        res = run_throughput(cfg)
        assert res.link_dropped > 0
        assert res.delivery_ratio < 1.0
        assert res.conservation_ok

    def test_same_seed_reproduces_exactly(self):
        first = run_throughput(SMALL)
        second = run_throughput(SMALL)
        assert first.trace.lines() == second.trace.lines()
        assert report.throughput_rows(first) == report.throughput_rows(second)

    def test_different_seed_differs(self):
        other = run_throughput(SMALL.replace(seed=8))
        base = run_throughput(SMALL)
        assert base.trace.lines() != other.trace.lines()


class TestScalability:
    def test_delay_grows_one_dispatch_step_per_robot(self):
        cfg = ScenarioConfig(rate_mps=20.0, n_messages=30, seed=2,
                             latency_lo_us=20_000, latency_hi_us=20_000)
        res = run_scalability(cfg, n_values=[1, 2, 3])
        for n in res.n_values:
            for stats in res.per_n[n]:
                want = 20_000 + (stats.index - 1) * 8_000
                assert set(stats.delays) == {want}
            assert res.max_delay_us(n) == 20_000 + (n - 1) * 8_000
        assert res.slope_us == pytest.approx(8_000.0)
        assert res.intercept_us == pytest.approx(12_000.0)
        assert res.r_squared == pytest.approx(1.0)


class TestReport:
    def test_throughput_rows_shape(self):
        res = run_throughput(SMALL)
        rows = report.throughput_rows(res)
        assert len(rows) == SMALL.n_robots + 1
        assert [r[0] for r in rows] == ["robot"] * 3 + ["total"]
        total = rows[-1]
        assert total[6] == "50" and total[7] == "150"
        assert total[8] == "1.000000" and total[-1] == "yes"
        for row in rows:
            assert len(row) == len(report.THROUGHPUT_HEADER)

    def test_run_dir_artifacts(self, tmp_path):
        res = run_throughput(SMALL)
        out = report.write_run_dir(tmp_path / "run", report.THROUGHPUT_HEADER,
                                   report.throughput_rows(res), res.trace,
                                   res.robots)
        with open(out / "report.csv", newline="") as fh:
            table = list(csv.reader(fh))
        assert table[0] == report.THROUGHPUT_HEADER
        assert len(table) == 1 + SMALL.n_robots + 1
        trace_lines = (out / "wire_trace.log").read_text().splitlines()
        assert trace_lines == res.trace.lines()
        with open(out / "pose_trace.csv", newline="") as fh:
            poses = list(csv.reader(fh))
        assert poses[0] == report.POSE_HEADER
        assert len(poses) == 1 + sum(len(r.pose_trace) for r in res.robots)

    def test_demo_registry_is_complete(self):
        assert set(DEMOS) == {"group-control", "path-copy", "dispersal",
                              "bridge"}

    def test_group_control_demo_passes(self):
        res = run_group_control(ScenarioConfig(n_robots=3))
        assert res.passed
        assert res.trace is not None and res.robots


class TestCli:
    def run(self, *argv):
        return main(list(argv))

    def test_throughput_command(self, tmp_path, capsys):
        code = self.run("throughput", "--robots", "2", "--rate", "50",
                        "--messages", "30", "--seed", "4",
                        "--out-dir", str(tmp_path / "tp"))
        out = capsys.readouterr().out
        assert code == 0
        assert "ratio 1.000000" in out
        for name in ("report.csv", "wire_trace.log", "pose_trace.csv"):
            assert (tmp_path / "tp" / name).is_file()

    def test_scenario_file_and_flag_precedence(self, tmp_path, capsys):
        scenario = tmp_path / "desk.scenario"
        scenario.write_text("rate_mps = 10\nn_robots = 2\nn_messages = 20\n")
        code = self.run("throughput", "--scenario", str(scenario),
                        "--rate", "25", "--out-dir", str(tmp_path / "tp"))
        out = capsys.readouterr().out
        assert code == 0
        assert "rate 25 msg/s, 2 robots" in out

    def test_scalability_command(self, tmp_path, capsys):
        code = self.run("scalability", "--robots", "3", "--rate", "20",
                        "--messages", "10",
                        "--out-dir", str(tmp_path / "sc"))
        out = capsys.readouterr().out
        assert code == 0
        assert "slope 8000.000 us/robot" in out
        sections = [line for line in
                    (tmp_path / "sc" / "wire_trace.log").read_text().splitlines()
                    if line.startswith("# n_robots=")]
        assert sections == ["# n_robots=1", "# n_robots=2", "# n_robots=3"]

    def test_demo_command(self, tmp_path, capsys):
        code = self.run("demo", "--demo", "group-control", "--robots", "2",
                        "--out-dir", str(tmp_path / "demo"))
        assert code == 0
        assert "demo group-control: PASS" in capsys.readouterr().out

    def test_command_moves_the_swarm(self, tmp_path, capsys):
        code = self.run("command", "--control", "front",
                        "--magnitude", "150", "--robots", "2",
                        "--out-dir", str(tmp_path / "cmd"))
        assert code == 0
        with open(tmp_path / "cmd" / "report.csv", newline="") as fh:
            table = list(csv.reader(fh))
        assert table[0] == report.COMMAND_HEADER
        assert [row[2] for row in table[1:]] == ["150.000000", "150.000000"]

    def test_private_topic_command(self, tmp_path, capsys):
        code = self.run("command", "--control", "rotate-left",
                        "--magnitude", "90", "--robots", "2",
                        "--target", "00100002",
                        "--out-dir", str(tmp_path / "cmd"))
        assert code == 0
        with open(tmp_path / "cmd" / "report.csv", newline="") as fh:
            table = list(csv.reader(fh))
        assert [row[4] for row in table[1:]] == ["0.000000", "90.000000"]

    def test_sweep_command(self, tmp_path, capsys):
        code = self.run("sweep", "--rates", "5,10", "--seeds", "1,2",
                        "--robots", "2", "--messages", "10",
                        "--out-dir", str(tmp_path / "sw"))
        assert code == 0
        for rate in ("5", "10"):
            for seed in ("1", "2"):
                sub = tmp_path / "sw" / f"rate-{rate}-seed-{seed}"
                assert (sub / "report.csv").is_file()
        with open(tmp_path / "sw" / "report.csv", newline="") as fh:
            table = list(csv.reader(fh))
        assert len(table) == 1 + 4 * (2 + 1)  # four runs, three rows each

    def test_invalid_payload_exits_2(self, tmp_path, capsys):
        code = self.run("throughput", "--payload", "5",
                        "--out-dir", str(tmp_path / "bad"))
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_bad_scenario_key_exits_2(self, tmp_path, capsys):
        scenario = tmp_path / "bad.scenario"
        scenario.write_text("robots = 3\n")
        code = self.run("throughput", "--scenario", str(scenario),
                        "--out-dir", str(tmp_path / "bad"))
        assert code == 2

    def test_reruns_are_byte_identical(self, tmp_path):
        argv = ["throughput", "--robots", "2", "--rate", "50",
                "--messages", "30", "--seed", "11"]
        assert self.run(*argv, "--out-dir", str(tmp_path / "one")) == 0
        assert self.run(*argv, "--out-dir", str(tmp_path / "two")) == 0
        for name in ("report.csv", "wire_trace.log", "pose_trace.csv"):
            first = (tmp_path / "one" / name).read_bytes()
            second = (tmp_path / "two" / name).read_bytes()
            assert first == second
