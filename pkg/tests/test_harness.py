import numpy as np
import pytest

from chargeflow.harness import (
    CSV_COLUMNS,
    ExperimentConfig,
    generate_separated_target,
    generate_target,
    match_to_target,
    parse_config_file,
    recovery_experiment,
    rows_to_csv,
    run_table,
    sgd_train,
)
from chargeflow.loss import TargetNetwork


class TestGenerateTarget:
    def test_deterministic_per_seed(self):
        a = generate_target(10, 3, 7, seed=5)
        b = generate_target(10, 3, 7, seed=5)
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)
        c = generate_target(10, 3, 7, seed=6)
        assert not np.array_equal(a.weights[0], c.weights[0])

    def test_shapes(self):
        net = generate_target(10, 4, 8, seed=0)
        assert net.depth == 4
        assert [w.shape for w in net.weights] == [(8, 10), (8, 8), (8, 8), (1, 8)]

    def test_depth_two_counts(self):
        net = generate_target(6, 2, 9, seed=0)
        assert [w.shape for w in net.weights] == [(9, 6), (1, 9)]

    def test_theory_flavor(self):
        tgt = generate_target(3, 2, 5, seed=1, flavor="theory")
        assert isinstance(tgt, TargetNetwork)
        assert tgt.w.shape == (5, 3) and tgt.b.shape == (5,)
        assert np.all(np.abs(tgt.b) <= 1.0)

    def test_theory_scale_default_is_d_log_d(self):
        # variance knob defaults to d * ln d
        d = 3
        samples = np.vstack(
            [generate_target(d, 2, 40, seed=s, flavor="theory").w for s in range(60)]
        )
        var = samples.var()
        assert var == pytest.approx(d * np.log(d), rel=0.1)

    def test_separated_target_respects_floor(self):
        for seed in range(5):
            tgt = generate_separated_target(3, 3, seed, separation=10.0)
            diff = tgt.w[:, None, :] - tgt.w[None, :, :]
            dist = np.sqrt((diff**2).sum(-1))
            np.fill_diagonal(dist, np.inf)
            assert dist.min() >= 10.0


class TestSgdTrain:
    def test_zero_iterations_random_guess_band(self):
        cfg = ExperimentConfig(iters=0, n_train=2000, n_test=2000)
        for seed in (0, 1):
            target = generate_target(10, 2, 10, seed)
            row = sgd_train(cfg, target, 2, 10, seed)
            assert 0.5 <= row.test_err <= 2.0

    def test_identical_seeds_identical_errors(self):
        cfg = ExperimentConfig(iters=200, n_train=500, n_test=500)
        target = generate_target(10, 2, 5, 3)
        r1 = sgd_train(cfg, target, 2, 5, 3)
        r2 = sgd_train(cfg, target, 2, 5, 3)
        assert (r1.train_err, r1.test_err) == (r2.train_err, r2.test_err)

    def test_short_training_improves(self):
        cfg0 = ExperimentConfig(iters=0, n_train=2000, n_test=2000)
        cfg1 = ExperimentConfig(iters=5000, n_train=2000, n_test=2000)
        target = generate_target(10, 2, 5, 0)
        before = sgd_train(cfg0, target, 2, 5, 0)
        after = sgd_train(cfg1, target, 2, 5, 0)
        assert after.test_err < before.test_err / 2


class TestTableRunner:
    def test_grid_shape_and_csv(self):
        cfg = ExperimentConfig(
            depths=(2,), widths=(5, 10), seeds=(0, 1, 2), iters=50, n_train=300, n_test=300
        )
        rows = run_table(cfg)
        assert len(rows) == 6
        text = rows_to_csv(rows)
        lines = text.strip().split("\n")
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) == 7

    def test_determinism_excluding_wall_clock(self):
        cfg = ExperimentConfig(
            depths=(2,), widths=(5,), seeds=(0, 1), iters=100, n_train=300, n_test=300
        )
        strip = lambda text: [line.rsplit(",", 1)[0] for line in text.strip().split("\n")]
        a = strip(rows_to_csv(run_table(cfg)))
        b = strip(rows_to_csv(run_table(cfg)))
        assert a == b

    def test_parallel_matches_serial(self):
        cfg = ExperimentConfig(
            depths=(2,), widths=(5,), seeds=(0, 1), iters=50, n_train=200, n_test=200
        )
        serial = [(r.depth, r.width, r.seed, r.train_err, r.test_err) for r in run_table(cfg)]
        par = [
            (r.depth, r.width, r.seed, r.train_err, r.test_err)
            for r in run_table(cfg, workers=2)
        ]
        assert serial == par


class TestMatching:
    def test_permutation_is_distinct_and_minimal(self):
        tgt = TargetNetwork(w=np.array([[10.0, 0, 0], [0.0, 10, 0], [0, 0, 10.0]]), b=[1.0, -0.5, 0.2])
        theta = np.array([[0.0, 9.9, 0], [0, 0, 10.05], [10.1, 0, 0]])
        a = np.array([0.5, -0.2, -1.0])
        perm, max_dist, max_charge = match_to_target(theta, a, tgt)
        assert sorted(perm.tolist()) == [0, 1, 2]
        assert perm.tolist() == [1, 2, 0]
        assert max_dist == pytest.approx(0.1, abs=1e-12)

    def test_k_guard(self):
        tgt = TargetNetwork(w=np.zeros((9, 2)), b=np.ones(9))
        with pytest.raises(ValueError):
            match_to_target(np.zeros((9, 2)), np.ones(9), tgt)


class TestRecovery:
    def test_single_node_quick(self, almost_table):
        cfg = ExperimentConfig(
            experiment="recovery",
            k=1,
            seeds=(0, 1),
            trials=200_000,
            descent_T=15_000,
        )
        report = recovery_experiment(cfg, table_loader=lambda d, e, l: almost_table)
        assert report["recovered_count"] == 2
        for rec in report["records"]:
            assert rec["distinct"]
            assert rec["max_position_err"] < 0.1
            assert rec["max_charge_err"] < 0.1


class TestRecoveryGaussianKernel:
    def test_moderate_separation(self):
        # the Gaussian kernel couples nodes only within a few sqrt(d/c) radii,
        # so the separation is set where its field is still alive
        cfg = ExperimentConfig(
            experiment="recovery",
            k=2,
            seeds=(0,),
            potential="gauss:c=1",
            separation=4.0,
            trials=500_000,
            descent_T=20_000,
            descent_alpha=3e-5,
            radius_mult=1.3,
        )
        report = recovery_experiment(cfg)
        assert report["recovered_count"] == 1


class TestConfigFile:
    def test_parse_and_override(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text(
            "# comment line\n"
            "d = 6\n"
            "depths = 2,3\n"
            "widths = 5\n"
            "alpha = 0.125   # trailing comment\n"
            "seeds = 0,1,2\n"
            "full_scale = false\n"
        )
        values = parse_config_file(path)
        assert values == {
            "d": 6,
            "depths": (2, 3),
            "widths": (5,),
            "alpha": 0.125,
            "seeds": (0, 1, 2),
            "full_scale": False,
        }

    def test_bad_line_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("this is not a key value pair\n")
        with pytest.raises(ValueError):
            parse_config_file(path)

    def test_full_scale_resolution(self):
        cfg = ExperimentConfig(full_scale=True)
        resolved = cfg.resolved()
        assert resolved.iters == 1_000_000
        assert resolved.alpha == 1e-5

    def test_validation(self):
        with pytest.raises(ValueError):
            ExperimentConfig(seeds=())
        with pytest.raises(ValueError):
            ExperimentConfig(n_train=0)
