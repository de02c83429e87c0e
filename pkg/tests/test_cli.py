import json

import numpy as np
import pytest

from gmr.cli import main
from gmr.core import GaussianMixture, load_mixture, save_mixture
from gmr.repro import case_study_mixture
from gmr.repro import test_mixture as make_test_mixture


@pytest.fixture
def files(tmp_path):
    paths = {
        "test": tmp_path / "test.json",
        "n01": tmp_path / "n01.json",
        "n11": tmp_path / "n11.json",
        "fig3": tmp_path / "fig3.json",
        "fig4": tmp_path / "fig4.json",
        "two_d": tmp_path / "two_d.json",
    }
    save_mixture(make_test_mixture(), paths["test"])
    save_mixture(GaussianMixture([1.0], [0.0], [1.0]), paths["n01"])
    save_mixture(GaussianMixture([1.0], [1.0], [1.0]), paths["n11"])
    save_mixture(case_study_mixture(4.0), paths["fig3"])
    save_mixture(case_study_mixture(10.0), paths["fig4"])
    save_mixture(GaussianMixture([1.0], [[0.0, 0.0]], [np.eye(2)]), paths["two_d"])
    return paths


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, (json.loads(out) if code == 0 and out.strip() else None)


class TestDissim:
    def test_self_distance(self, capsys, files):
        code, out = run(capsys, "dissim", files["test"], files["test"], "--measure", "ise")
        assert code == 0 and out["value"] == pytest.approx(0.0, abs=1e-12)

    def test_kld_numeric_vs_closed_form(self, capsys, files):
        _, numeric = run(capsys, "dissim", files["n01"], files["n11"], "--measure", "kld")
        _, closed = run(capsys, "dissim", files["n01"], files["n11"], "--measure", "kld", "--closed-form")
        assert numeric["method"] == "quadrature" and "error" in numeric
        assert abs(numeric["value"] - closed["value"]) < 1e-6

    def test_williams_output_score(self, capsys, files, tmp_path):
        reduced = tmp_path / "reduced.json"
        run(capsys, "reduce", files["test"], "--target", 2, "--out", reduced)
        _, out = run(capsys, "dissim", reduced, files["test"], "--measure", "ise")
        assert out["value"] == pytest.approx(0.0059636, abs=1e-5)

    def test_exit_codes(self, capsys, files, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"weights": [0.7, 0.7], "components": [{"mean": [0], "cov": [[1]]}, {"mean": [1], "cov": [[1]]}]}')
        assert run(capsys, "dissim", bad, files["test"])[0] == 2
        assert run(capsys, "dissim", tmp_path / "missing.json", files["test"])[0] == 2
        assert run(capsys, "dissim", files["n01"], files["two_d"])[0] == 3
        assert run(capsys, "dissim", files["test"], files["n01"], "--measure", "kld", "--closed-form")[0] == 4
        assert run(capsys, "dissim", files["n01"], files["n11"], "--measure", "kld", "--abs-tol", "-1")[0] == 4

    def test_seed_environment(self, capsys, files, tmp_path, monkeypatch):
        a = tmp_path / "a.json"
        save_mixture(GaussianMixture([0.5, 0.5], [[0.0, 0.0], [1.0, 1.0]], [np.eye(2), np.eye(2)]), a)
        args = ("dissim", a, files["two_d"], "--measure", "kld", "--mc-samples", "5000")
        _, default = run(capsys, *args)
        _, explicit = run(capsys, *args, "--seed", "42")
        monkeypatch.setenv("GMR_SEED", "7")
        _, env = run(capsys, *args)
        assert default == explicit and env != default
        monkeypatch.setenv("GMR_SEED", "x")
        assert run(capsys, *args)[0] == 4


class TestReduce:
    @pytest.mark.parametrize(
        "pipeline, steps",
        [
            ("williams", ["merge 3+4 (out of 5)", "prune 2 (out of 4)", "merge 1+2 (out of 3)"]),
            ("williams-ise", ["merge 3+4 (out of 5)", "merge 2+3 (out of 4)", "merge 1+2 (out of 3)"]),
        ],
    )
    def test_traces(self, capsys, files, tmp_path, pipeline, steps):
        trace = tmp_path / "trace.json"
        code, out = run(capsys, "reduce", files["test"], "--target", 2, "--pipeline", pipeline, "--trace", trace)
        assert code == 0 and out["size"] == 2
        assert [s.split("  ")[0] for s in out["steps"]] == steps
        doc = json.loads(trace.read_text())
        assert set(doc) >= {"measure", "steps", "final_cost"}
        assert doc["final_cost"] == pytest.approx(out["ise"], rel=1e-15)

    def test_runnalls_with_kld(self, capsys, files):
        code, out = run(capsys, "reduce", files["test"], "--target", 2, "--pipeline", "runnalls", "--kld")
        assert code == 0 and out["kld"] > 0 and out["steps"][0].startswith("merge 3+4")

    def test_round_trip(self, capsys, files, tmp_path):
        first = tmp_path / "r.json"
        run(capsys, "reduce", files["test"], "--target", 3, "--out", first)
        loaded = load_mixture(first)
        again = tmp_path / "r2.json"
        save_mixture(loaded, again)
        assert again.read_bytes() == first.read_bytes()
        assert load_mixture(again).same_parameters(loaded)

    def test_deterministic_bytes(self, capsys, files, tmp_path):
        outs = []
        for k in range(2):
            o, t = tmp_path / f"o{k}.json", tmp_path / f"t{k}.json"
            run(capsys, "reduce", files["test"], "--target", 2, "--pipeline", "williams-ise", "--out", o, "--trace", t)
            outs.append((o.read_bytes(), t.read_bytes()))
        assert outs[0] == outs[1]

    @pytest.mark.parametrize("target", [0, 5, 9])
    def test_bad_target(self, capsys, files, target):
        assert run(capsys, "reduce", files["test"], "--target", target)[0] == 4


class TestBsga:
    def test_single_gaussian_input(self, capsys, files):
        code, out = run(capsys, "bsga", files["n01"], "--measure", "ise")
        assert code == 0 and out["objective"] == 0.0 and out["mean"] == [0.0]

    def test_nise_multistart_mu10(self, capsys, files):
        _, out = run(capsys, "bsga", files["fig4"], "--measure", "nise", "--multistart")
        assert out["mean"][0] == pytest.approx(10.0, abs=0.05)

    def test_ise_local_minimum(self, capsys, files, tmp_path):
        dest = tmp_path / "g.json"
        code, out = run(capsys, "--strict", "bsga", files["fig3"], "--measure", "ise", "--init", "kld", "--out", dest)
        assert code == 0 and out["converged"]
        assert out["mean"][0] == pytest.approx(2.0419, abs=5e-4)
        assert out["cov"][0][0] == pytest.approx(11.1479, abs=5e-4)
        assert load_mixture(dest).n == 1

    def test_init_file(self, capsys, files, tmp_path):
        start = tmp_path / "start.json"
        save_mixture(GaussianMixture([1.0], [9.0], [1.0]), start)
        code, out = run(capsys, "bsga", files["fig4"], "--measure", "ise", "--init", start)
        assert code == 0 and out["mean"][0] == pytest.approx(10.0, abs=0.05)
        assert run(capsys, "bsga", files["fig4"], "--init", files["fig3"])[0] == 4
        assert run(capsys, "bsga", files["fig4"], "--init", files["two_d"])[0] == 3

    def test_strict_non_convergence(self, capsys, files):
        assert run(capsys, "--strict", "bsga", files["fig3"], "--max-iters", 2)[0] == 5
        assert run(capsys, "bsga", files["fig3"], "--max-iters", 2)[0] == 0


class TestRefineAndRepro:
    def test_refine(self, capsys, files, tmp_path):
        start, out_path = tmp_path / "start.json", tmp_path / "refined.json"
        run(capsys, "reduce", files["test"], "--target", 2, "--pipeline", "williams-ise", "--out", start)
        code, out = run(capsys, "refine", files["test"], start, "--measure", "ise", "--out", out_path)
        assert code == 0 and out["final_cost"] <= out["initial_cost"]
        assert out["final_cost"] == pytest.approx(0.0034194396127466, rel=1e-8)
        assert load_mixture(out_path).n == 2

    def test_refine_mismatch(self, capsys, files):
        assert run(capsys, "refine", files["test"], files["two_d"])[0] == 3

    def test_repro(self, capsys, tmp_path):
        code, out = run(capsys, "repro", "fig6", "--outdir", tmp_path)
        assert code == 0 and "fig6_manifest.json" in out["files"]
        assert run(capsys, "repro", "fig42", "--outdir", tmp_path)[0] == 4
