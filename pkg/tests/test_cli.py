import json
import os
import subprocess
import sys

import numpy as np
import pytest

from segre.cli import EXIT_OK, EXIT_USAGE, EXIT_VIOLATION, build_parser, run

L2 = {"dim": 2, "norm": {"type": "lp", "p": 2}}
L1_3 = {"dim": 3, "norm": {"type": "lp", "p": 1}}
LINF = {"dim": 2, "norm": {"type": "lp", "p": "inf"}}

SUBCOMMANDS = [
    ["spaces", "auerbach"], ["norms", "eval"], ["rank", "estimate"], ["rank", "segre"], ["rank", "ruling"],
    ["sigma", "opnorm"], ["sigma", "lip"], ["sigma", "psum"],
    ["exp", "equivalence"], ["exp", "subspace"], ["exp", "sigma-r"], ["exp", "border"], ["exp", "closedness"],
]


def write(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def run_json(argv, capsys):
    code = run(argv)
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip().startswith(("{", "[")) else out)


def test_help_for_every_subcommand(capsys):
    for cmd in [[]] + [c[:1] for c in SUBCOMMANDS] + SUBCOMMANDS:
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(cmd + ["--help"])
        assert exc.value.code == 0
        assert "usage:" in capsys.readouterr().out


def test_unknown_subcommand_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        run(["frobnicate"])
    assert exc.value.code == EXIT_USAGE


class TestNorms:
    def test_pure_tensor_norms_equal_product(self, tmp_path, capsys):
        x, y = [3.0, 4.0], [1.0, -2.0, 0.5]
        path = write(tmp_path, "t.json", {"modes": [L2, L1_3], "factors": [x, y]})
        code, out = run_json(["norms", "eval", "--tensor", path], capsys)
        assert code == EXIT_OK
        expected = 5.0 * 3.5
        for kind in ("injective", "projective"):
            assert out[kind]["lower"] == pytest.approx(expected, rel=1e-9)
            assert out[kind]["upper"] == pytest.approx(expected, rel=1e-9)

    def test_hilbert_included_for_euclidean(self, tmp_path, capsys):
        path = write(tmp_path, "t.json", {"modes": [L2, L2], "coords": [1, 0, 0, 1]})
        code, out = run_json(["norms", "eval", "--tensor", path], capsys)
        assert code == EXIT_OK
        assert out["hilbert"]["lower"] == pytest.approx(np.sqrt(2))
        assert out["projective"]["upper"] == pytest.approx(2.0, abs=1e-8)

    def test_single_kind(self, tmp_path, capsys):
        path = write(tmp_path, "t.json", {"modes": [L2, L2], "coords": [1, 0, 0, 1]})
        code, out = run_json(["norms", "eval", "--tensor", path, "--kind", "injective"], capsys)
        assert code == EXIT_OK and list(out) == ["injective"]

    def test_csv_output(self, tmp_path, capsys):
        path = write(tmp_path, "t.json", {"modes": [L2, L2], "coords": [1, 0, 0, 1]})
        assert run(["norms", "eval", "--tensor", path, "--format", "csv"]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].startswith("hilbert.") or "injective.lower" in lines[0]
        assert len(lines) == 2


class TestInputErrors:
    def test_malformed_json_reports_location(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text('{"modes": [\n,]}')
        assert run(["norms", "eval", "--tensor", str(path)]) == EXIT_USAGE
        assert "line 2, column 1" in capsys.readouterr().err

    def test_missing_file(self, tmp_path, capsys):
        assert run(["rank", "segre", "--tensor", str(tmp_path / "none.json")]) == EXIT_USAGE

    def test_wrong_coordinate_count(self, tmp_path, capsys):
        path = write(tmp_path, "t.json", {"modes": [L2, L2], "coords": [1, 2, 3]})
        assert run(["rank", "segre", "--tensor", path]) == EXIT_USAGE
        assert "expected 4" in capsys.readouterr().err

    def test_invalid_norm(self, tmp_path, capsys):
        path = write(tmp_path, "s.json", {"dim": 2, "norm": {"type": "lp", "p": 0.5}})
        assert run(["spaces", "auerbach", "--config", path]) == EXIT_USAGE

    def test_unknown_config_key(self, tmp_path, capsys):
        path = write(tmp_path, "c.json", {"spaces": [L2, L2], "trails": 3})
        assert run(["exp", "subspace", "--config", path]) == EXIT_USAGE
        assert "trails" in capsys.readouterr().err

    def test_missing_required_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run(["rank", "estimate", "--tensor", "x.json"])
        assert exc.value.code == EXIT_USAGE


class TestRank:
    def test_w_estimate(self, tmp_path, capsys):
        coords = np.zeros((2, 2, 2))
        coords[1, 0, 0] = coords[0, 1, 0] = coords[0, 0, 1] = 1
        path = write(tmp_path, "w.json", {"modes": [L2] * 3, "coords": coords.ravel().tolist()})
        code, out = run_json(["rank", "estimate", "--tensor", path, "--rmax", "3"], capsys)
        assert code == EXIT_OK
        assert (out["lower"], out["upper"], out["status"]) == (2, 3, "Bracketed")
        assert out["border_suspected"] == [{"m": 2, "flag": "BorderRankSuspected"}]

    def test_segre(self, tmp_path, capsys):
        path = write(tmp_path, "t.json", {"modes": [L2, L2], "terms": [[[1, 0], [1, 0]], [[0, 1], [0, 1]]]})
        code, out = run_json(["rank", "segre", "--tensor", path], capsys)
        assert code == EXIT_OK and out["is_segre"] is False

    def test_ruling(self, tmp_path, capsys):
        basis = [{"modes": [L2, L2], "factors": [[1, 0], [1, 0]]}, {"modes": [L2, L2], "factors": [[1, 0], [0, 1]]}]
        path = write(tmp_path, "b.json", {"basis": basis})
        code, out = run_json(["rank", "ruling", "--config", path], capsys)
        assert code == EXIT_OK and out["result"] == "Ruling" and out["mode"] == 1


class TestSigmaAndSpaces:
    def test_opnorm_and_lip(self, tmp_path, capsys):
        T = {"codomain": {"dim": 1}, "modes": [L2, L2], "coeffs": [[[3, 0], [0, 1]]]}
        path = write(tmp_path, "T.json", T)
        code, out = run_json(["sigma", "opnorm", "--config", path], capsys)
        assert code == EXIT_OK and out["upper"] == pytest.approx(3.0)
        code, out = run_json(["sigma", "lip", "--config", path, "--pairs", "4"], capsys)
        assert code == EXIT_OK and out["lipschitz_lower"] == pytest.approx(3.0)

    def test_psum(self, tmp_path, capsys):
        T = write(tmp_path, "T.json", {"codomain": {"dim": 1}, "modes": [L2, L2], "coeffs": [[[1, 0], [0, 1]]]})
        fam = write(tmp_path, "f.json", {"p": 1, "us": [[[1, 0], [1, 0]], [[0, 1], [0, 1]]],
                                         "vs": [[[0, 0], [0, 0]], [[0, 0], [0, 0]]]})
        code, out = run_json(["sigma", "psum", "--config", T, "--family", fam], capsys)
        assert code == EXIT_OK and out["ratio_lower"] >= 1 - 1e-6

    def test_auerbach(self, tmp_path, capsys):
        path = write(tmp_path, "s.json", {"dim": 2, "norm": {"type": "ellipsoid", "A": [[4, 0], [0, 1]]}})
        code, out = run_json(["spaces", "auerbach", "--config", path], capsys)
        assert code == EXIT_OK and out["converged"]
        np.testing.assert_allclose(np.abs(out["vectors"]), [[0.5, 0], [0, 1]], atol=1e-8)


class TestExperiments:
    def test_closedness_json(self, tmp_path, capsys):
        path = write(tmp_path, "c.json", {"spaces": [L2, L2], "r": 1, "trials": 3})
        code, out = run_json(["exp", "closedness", "--config", path], capsys)
        assert code == EXIT_OK
        assert out["summary"]["verdict_counts"]["CertifiedViolation"] == 0
        assert len(out["trials"]) == 3

    def test_seed_flag_overrides(self, tmp_path, capsys):
        path = write(tmp_path, "c.json", {"spaces": [L2, LINF], "trials": 2, "seed": 1})
        run(["exp", "subspace", "--config", path, "--format", "csv"])
        a = capsys.readouterr().out
        run(["exp", "subspace", "--config", path, "--format", "csv", "--seed", "2"])
        b = capsys.readouterr().out
        assert a != b

    def test_out_file(self, tmp_path, capsys):
        path = write(tmp_path, "c.json", {"spaces": [L2, L2], "trials": 2})
        out = tmp_path / "res.csv"
        assert run(["exp", "closedness", "--config", path, "--format", "csv", "--out", str(out)]) == EXIT_OK
        assert capsys.readouterr().out == ""
        assert out.read_text().startswith("trial,verdict,")

    def test_violation_exit_code(self, tmp_path, capsys, monkeypatch):
        from segre import experiments
        from segre.cross_norms import Verdict

        real = experiments.matrix_closedness_demo

        def broken(cfg):
            return [experiments.TrialVerdict(t.trial, Verdict.VIOLATION, t.values, t.checks) for t in real(cfg)]

        monkeypatch.setattr(experiments, "matrix_closedness_demo", broken)
        path = write(tmp_path, "c.json", {"spaces": [L2, L2], "trials": 1})
        assert run(["exp", "closedness", "--config", path]) == EXIT_VIOLATION


def test_byte_identical_across_runs_and_threads(tmp_path):
    path = write(tmp_path, "c.json", {"spaces": [L2, L2, L2], "r": 2, "trials": 3, "seed": 5})
    outputs = []
    for threads, workers in (("1", "1"), ("1", "1"), ("8", "3")):
        env = dict(os.environ, OMP_NUM_THREADS=threads, OPENBLAS_NUM_THREADS=threads, MKL_NUM_THREADS=threads)
        res = subprocess.run([sys.executable, "-m", "segre", "exp", "equivalence", "--config", path,
                              "--workers", workers], capture_output=True, env=env, check=True)
        outputs.append(res.stdout)
    assert outputs[0] == outputs[1] == outputs[2]
