import csv
import hashlib
import json

import pytest

from skewjoin.cli import build_parser, main
from skewjoin.model import NULL_GLYPH, read_relation_tsv


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def gen_file(tmp_path, name, seed, n_uniform=60, n_zipf=120, domain=8, alpha=0.9):
    path = tmp_path / name
    rc = main([
        "gen", "--alpha", str(alpha), "--record-bytes", "3",
        "--n-uniform", str(n_uniform), "--n-zipf", str(n_zipf),
        "--zipf-domain", str(domain), "--uniform-key-space", "40",
        "--partitions", "3", "--seed", str(seed), "--output", str(path),
    ])
    assert rc == 0
    return path


class TestGen:
    def test_writes_file_and_summary(self, tmp_path, capsys):
        path = gen_file(tmp_path, "r.tsv", seed=1)
        out = capsys.readouterr().out
        assert "180 records" in out
        rel = read_relation_tsv(str(path), 2)
        assert rel.cardinality == 180

    def test_missing_required_flag_is_usage_error(self, tmp_path):
        assert main(["gen", "--output", str(tmp_path / "x.tsv")]) == 2

    def test_repeated_seed_identical_file(self, tmp_path):
        a = gen_file(tmp_path, "a.tsv", seed=5)
        b = gen_file(tmp_path, "b.tsv", seed=5)
        assert sha(a) == sha(b)

    def test_env_var_supplies_default_seed(self, tmp_path, monkeypatch):
        explicit = gen_file(tmp_path, "explicit.tsv", seed=17)
        monkeypatch.setenv("SKEWJOIN_SEED", "17")
        from_env = tmp_path / "env.tsv"
        rc = main(["gen", "--alpha", "0.9", "--record-bytes", "3",
                   "--n-uniform", "60", "--n-zipf", "120", "--zipf-domain", "8",
                   "--uniform-key-space", "40", "--partitions", "3",
                   "--output", str(from_env)])
        assert rc == 0
        assert sha(explicit) == sha(from_env)


class TestJoin:
    def run_join(self, tmp_path, algo, mode=None, extra=(), seed=3):
        left = gen_file(tmp_path, f"{algo}-l.tsv", seed=seed)
        right = gen_file(tmp_path, f"{algo}-r.tsv", seed=seed + 1)
        out = tmp_path / f"{algo}.out.tsv"
        metrics = tmp_path / f"{algo}.metrics.json"
        argv = ["join", "--algo", algo, "--left", str(left), "--right", str(right),
                "--output", str(out), "--metrics", str(metrics),
                "--executors", "4", "--lambda", "1", "--seed", "9",
                "--k-max", "16", "--min-freq", "3", "--verify"]
        if mode:
            argv += ["--mode", mode]
        argv += list(extra)
        return main(argv), out, metrics

    def test_am_full_runs_and_verifies(self, tmp_path):
        rc, out, metrics = self.run_join(tmp_path, "am", "full")
        assert rc == 0
        data = json.loads(metrics.read_text())
        assert set(data) == {"stages", "shuffledBytes", "broadcastBytes",
                             "emittedRecordsPerExecutor", "emittedBytesPerExecutor", "seed"}
        assert data["seed"] == 9
        assert len(data["emittedRecordsPerExecutor"]) == 4
        assert out.stat().st_size > 0

    @pytest.mark.parametrize("algo,mode", [
        ("tree-basic", None), ("tree", None), ("shuffle", "full"),
        ("ib-full", None), ("der", None), ("ddr", None),
    ])
    def test_each_algorithm_verifies(self, tmp_path, algo, mode):
        rc, _out, _metrics = self.run_join(tmp_path, algo, mode)
        assert rc == 0

    def test_self_join_via_input_flag(self, tmp_path):
        rel = gen_file(tmp_path, "self.tsv", seed=7)
        rc = main(["join", "--algo", "self-tree", "--input", str(rel),
                   "--output", str(tmp_path / "self.out"), "--executors", "3",
                   "--lambda", "1", "--min-freq", "3", "--k-max", "8", "--verify"])
        assert rc == 0

    def test_am_self_mode(self, tmp_path):
        rel = gen_file(tmp_path, "amself.tsv", seed=8)
        rc = main(["join", "--algo", "am", "--mode", "self", "--input", str(rel),
                   "--output", str(tmp_path / "amself.out"), "--executors", "3",
                   "--lambda", "1", "--min-freq", "3", "--k-max", "8", "--verify"])
        assert rc == 0

    def test_join_rerun_is_byte_identical(self, tmp_path):
        left = gen_file(tmp_path, "det-l.tsv", seed=11)
        right = gen_file(tmp_path, "det-r.tsv", seed=12)
        digests = []
        for attempt in range(2):
            out = tmp_path / f"det-{attempt}.tsv"
            metrics = tmp_path / f"det-{attempt}.json"
            rc = main(["join", "--algo", "am", "--mode", "full", "--left", str(left),
                       "--right", str(right), "--output", str(out), "--metrics", str(metrics),
                       "--executors", "4", "--lambda", "1", "--seed", "13",
                       "--min-freq", "3", "--k-max", "8"])
            assert rc == 0
            digests.append((sha(out), sha(metrics)))
        assert digests[0] == digests[1]

    def test_invalid_algo_mode_pair(self, tmp_path):
        left = gen_file(tmp_path, "x.tsv", seed=1)
        rc = main(["join", "--algo", "tree-basic", "--mode", "full",
                   "--left", str(left), "--right", str(left)])
        assert rc == 2

    def test_missing_inputs_usage_error(self, tmp_path):
        assert main(["join", "--algo", "shuffle"]) == 2

    def test_capacity_error_has_dedicated_exit_code(self, tmp_path):
        left = gen_file(tmp_path, "big-l.tsv", seed=2)
        right = gen_file(tmp_path, "big-r.tsv", seed=3)
        rc = main(["join", "--algo", "ib", "--left", str(left), "--right", str(right),
                   "--memory", "64", "--executors", "2"])
        assert rc == 3

    def test_null_glyph_in_outer_output(self, tmp_path):
        rc, out, _ = self.run_join(tmp_path, "shuffle", "full")
        assert rc == 0
        assert NULL_GLYPH in out.read_text()

    def test_hot_key_flag_defaults_match_benchmark_configuration(self):
        args = build_parser().parse_args(["join", "--algo", "am", "--left", "x", "--right", "y"])
        assert args.k_max == 1000
        assert args.min_freq == 100.0


class TestBench:
    BENCH_ARGS = ["bench", "--algos", "am,shuffle", "--alphas", "0.0,0.25,0.5,0.75,1.0",
                  "--executors-list", "4", "--n-uniform", "40", "--n-zipf", "80",
                  "--zipf-domain", "10", "--record-bytes", "2", "--lambda", "1",
                  "--min-freq", "3", "--k-max", "8", "--seed", "2"]

    def test_sweep_row_count_and_columns(self, tmp_path):
        out = tmp_path / "bench.csv"
        rc = main(self.BENCH_ARGS + ["--output", str(out)])
        assert rc == 0
        with open(out) as handle:
            rows = list(csv.DictReader(handle))
        assert len(rows) == 10
        assert list(rows[0]) == ["algorithm", "mode", "alpha", "n", "lambda", "stages",
                                 "shuffled_bytes", "broadcast_bytes",
                                 "max_executor_records", "total_rows", "status"]
        assert all(row["status"] == "ok" for row in rows)

    def test_sweep_is_deterministic(self, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        assert main(self.BENCH_ARGS + ["--output", str(a)]) == 0
        assert main(self.BENCH_ARGS + ["--output", str(b)]) == 0
        assert sha(a) == sha(b)

    def test_failed_run_recorded_and_sweep_continues(self, tmp_path):
        out = tmp_path / "fail.csv"
        rc = main(["bench", "--algos", "ib,shuffle", "--alphas", "0.5",
                   "--executors-list", "2", "--n-uniform", "50", "--n-zipf", "50",
                   "--zipf-domain", "10", "--record-bytes", "32", "--memory", "128",
                   "--seed", "4", "--output", str(out)])
        assert rc == 0
        with open(out) as handle:
            rows = list(csv.DictReader(handle))
        statuses = {row["algorithm"]: row["status"] for row in rows}
        assert statuses["ib"] == "error:broadcast-capacity"
        assert statuses["shuffle"] == "ok"
