"""
Experiment configuration, metrics, drivers, theorem checks and the command line.
"""
import json

import numpy as np
import pytest

from src.control import ConstantController
from src.datagen import Dataset, GenConfig, generate_dataset
from src.diffusion import Normalizer, build_denoiser, default_schedule
from src.dynamics import SystemKind, SystemModel
from src.evalcli import (
    AblationKind,
    Artifacts,
    ArtifactNotFound,
    ConfigError,
    ExperimentReport,
    RuntimeSettings,
    TheoremBoundParams,
    ToyProblem,
    build_config,
    controller_factories,
    load_config,
    loglog_slope,
    multimodality_percentage,
    run_ablation,
    run_comparison,
    theorem1_coverage_check,
    theorem2_check,
)
from src.evalcli.cli import main
from src.evalcli.experiments import ablation_point, initial_states, probe_states, timing_slopes
from src.evalcli.metrics import has_separated_pair, normalize_costs
from src.evalcli.theorems import TruthSampler, coverage_datasets
from src.ocp import InputBox, OcpSpec, TransformKind
from src.solver import SolverConfig

LINEAR_CONFIG = """\
[system]
kind = linear
seed = 5

[datagen]
n_s = 2
n_t = 2
n_p = 2

[solver]
max_iterations = 30
"""


@pytest.fixture
def linear_cfg():
    return build_config({"system": {"kind": "linear"}},
                        ["control.episodes=3", "control.steps=4", "solver.max_iterations=30"])


@pytest.fixture
def linear_denoiser(rng):
    normalizer = Normalizer.fit(rng.uniform(-1, 1, size=(30, 1)), InputBox(lower=[-5.0], upper=[5.0]))
    return build_denoiser(1, 16, 1, default_schedule(), normalizer, rng, hidden=[16, 16],
                          step_dim=8, cond_dim=4)


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "linear.cfg"
    path.write_text(LINEAR_CONFIG)
    return path


class FixedSampler:
    """Returns the same sequences at every probe."""

    def __init__(self, sequences):
        self.sequences = np.asarray(sequences, dtype=float)

    def draw(self, state, count, rng):
        return self.sequences[:count]


# =============================================================================
# Configuration
# =============================================================================

class TestConfig:

    def test_preset_values(self):
        cfg = build_config({"system": {"kind": "cart_pole"}})
        assert cfg.ocp.horizon == 64
        assert (cfg.datagen.n_s, cfg.datagen.n_t, cfg.datagen.n_p) == (150, 50, 16)
        assert cfg.control.candidates == 5
        assert cfg.datagen.chi[2] == [1.8, 4.4]
        assert cfg.spec.box.lower == [-100.0]

    def test_pendubot_preset(self):
        cfg = build_config({"system": {"kind": "pendubot"}})
        assert cfg.ocp.horizon == 256
        assert cfg.control.inference_steps == 20
        assert cfg.control.candidates == 30

    def test_overrides_win_over_file(self):
        cfg = build_config({"system": {"kind": "cart_pole"}, "ocp": {"horizon": "48"}},
                           ["ocp.horizon=32", "control.candidates=9"])
        assert cfg.ocp.horizon == 32
        assert cfg.control.candidates == 9

    def test_master_seed_drives_stage_seeds(self):
        cfg = build_config({"system": {"kind": "linear", "seed": "3"}})
        assert cfg.seed == 3
        assert cfg.datagen.seed == cfg.diffusion.seed == cfg.behavior_clone.seed == cfg.control.seed == 3
        assert build_config({"system": {"kind": "linear", "seed": "3"}}, seed=8).datagen.seed == 8

    @pytest.mark.parametrize("raw, overrides", [
        ({"system": {"kind": "linear"}, "ocp": {"horizn": "3"}}, []),
        ({"system": {"kind": "linear"}, "nonsense": {}}, []),
        ({"system": {}}, []),
        ({"system": {"kind": "rocket"}}, []),
        ({"system": {"kind": "linear"}}, ["ocp.horizon=0"]),
        ({"system": {"kind": "linear"}}, ["horizon=3"]),
        ({"system": {"kind": "linear"}}, ["control.controllers=diffusion, teleport"]),
    ])
    def test_invalid_configs_raise(self, raw, overrides):
        with pytest.raises(ConfigError):
            build_config(raw, overrides)

    def test_digests(self):
        base = build_config({"system": {"kind": "linear"}})
        assert base.digest() == build_config({"system": {"kind": "linear"}}).digest()
        tuned = base.updated("control", candidates=11)
        assert tuned.digest() != base.digest()
        assert tuned.dataset_digest() == base.dataset_digest()
        assert tuned.denoiser_digest() == base.denoiser_digest()
        assert base.policy_digest(True) != base.policy_digest(False)

    def test_load_from_file(self, config_file):
        cfg = load_config(config_file, ["datagen.n_p=3"])
        assert cfg.seed == 5
        assert (cfg.datagen.n_s, cfg.datagen.n_p) == (2, 3)
        assert cfg.solver.max_iterations == 30

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.cfg")

    def test_default_multimodality_threshold(self):
        cfg = build_config({"system": {"kind": "cart_pole"}})
        assert cfg.multimodality.resolved_threshold(cfg.spec) == pytest.approx(0.25 * 200.0 * 8.0)

    def test_runtime_settings_from_environment(self, monkeypatch, tmp_path):
        monkeypatch.setenv("DNMPC_OUTPUT_ROOT", str(tmp_path))
        monkeypatch.setenv("DNMPC_WORKERS", "3")
        settings = RuntimeSettings()
        assert settings.workers == 3
        assert settings.resolved_ledger_url().endswith("ledger.db")
        assert str(tmp_path.as_posix()) in settings.resolved_ledger_url()


# =============================================================================
# Metrics
# =============================================================================

class TestMultimodality:

    def test_identical_samples_are_unimodal(self):
        sampler = FixedSampler(np.zeros((4, 3, 1)))
        probes = np.zeros((5, 2, 1))
        pct = multimodality_percentage(sampler, probes, 4, 0.5, np.random.default_rng(0))
        np.testing.assert_array_equal(pct, np.zeros(5))

    def test_separated_samples_are_multimodal(self):
        sequences = np.stack([np.full((3, 1), 1.0), np.full((3, 1), -1.0)])
        pct = multimodality_percentage(FixedSampler(sequences), np.zeros((4, 3, 1)), 2, 1.0,
                                       np.random.default_rng(0))
        np.testing.assert_array_equal(pct, np.full(4, 100.0))

    def test_single_sample_never_separated(self):
        assert not has_separated_pair(np.ones((1, 3, 1)), 0.1)

    def test_probe_shape_checked(self):
        with pytest.raises(ValueError):
            multimodality_percentage(FixedSampler(np.zeros((2, 3, 1))), np.zeros((4, 1)), 2, 1.0,
                                     np.random.default_rng(0))


def test_loglog_slope_of_power_law():
    x = [5.0, 20.0, 100.0]
    assert loglog_slope(x, [v**2 for v in x]) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        loglog_slope([1.0], [1.0])


def test_normalize_costs():
    assert normalize_costs({"a": 2.0, "b": 4.0}) == {"a": 0.5, "b": 1.0}
    assert np.isnan(normalize_costs({"a": 0.0})["a"])


def test_empty_report_rejected():
    with pytest.raises(ValueError):
        ExperimentReport().finalize()


# =============================================================================
# Theorem checks
# =============================================================================

class TestBound:

    def test_bound_values(self):
        params = TheoremBoundParams(p_b=0.2, delta_tilde=0.0, samples=10, epsilon=0.1)
        assert params.bound() == pytest.approx(0.8**10)
        assert params.bound() == pytest.approx(0.1074, abs=1e-4)
        shifted = TheoremBoundParams(p_b=0.3, delta_tilde=0.1, samples=10, epsilon=0.1)
        assert shifted.bound() == pytest.approx(0.8**10)
        single = TheoremBoundParams(p_b=0.2, delta_tilde=0.0, samples=1, epsilon=0.1)
        assert single.bound() == pytest.approx(0.8)

    def test_bound_decreases_with_samples(self):
        bounds = [TheoremBoundParams(p_b=0.3, delta_tilde=0.05, samples=m, epsilon=0.1).bound()
                  for m in (1, 5, 10)]
        assert bounds[0] > bounds[1] > bounds[2]

    def test_precondition(self):
        assert TheoremBoundParams(p_b=0.2, delta_tilde=0.1, samples=1, epsilon=0.1).precondition_holds
        assert not TheoremBoundParams(p_b=0.2, delta_tilde=0.2, samples=1, epsilon=0.1).precondition_holds

    def test_true_distribution_satisfies_bound(self):
        problem = ToyProblem()
        checks = theorem2_check(problem, TruthSampler(problem), [1, 5, 10], 2000, 0.6,
                                np.random.default_rng(0), 4000)
        for check in checks:
            assert check.status == "pass"
            assert check.argmin_failure_rate >= check.failure_rate
        assert checks[0].failure_rate > checks[2].failure_rate

    def test_best_of_k_improves_over_nested_prefixes(self):
        problem = ToyProblem()
        draws = TruthSampler(problem).draw(np.zeros(1), 500 * 20, np.random.default_rng(3))
        costs = problem.cost(draws).reshape(500, 20)
        distances = problem.distance_to_optimum(draws).reshape(500, 20)
        best_cost = np.minimum.accumulate(costs, axis=1)
        best_distance = np.minimum.accumulate(distances, axis=1)
        assert np.all(np.diff(best_cost, axis=1) <= 0)
        miss_rate = np.mean(best_distance > 0.6, axis=0)
        assert np.all(np.diff(miss_rate) <= 0)
        assert np.median(best_cost[:, -1]) < np.median(best_cost[:, 0])
        assert miss_rate[-1] < miss_rate[0]

    def test_sampler_missing_the_optimum_is_inconclusive(self):
        problem = ToyProblem()
        local_only = FixedSampler(np.repeat(problem.local_optimum[None], 5000, axis=0))
        checks = theorem2_check(problem, local_only, [1, 3], 100, 0.6, np.random.default_rng(0), 200)
        assert all(check.status == "inconclusive" for check in checks)
        assert all(check.failure_rate == 1.0 for check in checks)

    def test_ball_mass_matches_sampling(self):
        problem = ToyProblem()
        draws = problem.sample(20000, np.random.default_rng(1))
        empirical = np.mean(problem.distance_to_optimum(draws) <= 0.6)
        assert empirical == pytest.approx(problem.ball_mass(0.6), abs=0.015)


class TestCoverage:

    @staticmethod
    def _dataset(states):
        count = len(states)
        return Dataset(header={}, states=states, sequences=np.zeros((count, 1, 1)), costs=np.zeros(count),
                       converged=np.ones(count, dtype=bool))

    @staticmethod
    def _linear_setup(sigma, chi):
        model = SystemModel(kind=SystemKind.LINEAR, linear_a=-0.5, linear_b=1.0)
        spec = OcpSpec(horizon=8, q=[1.0], r=[0.1], p=[10.0], transform=TransformKind.IDENTITY,
                       box=InputBox(lower=[-5.0], upper=[5.0]))
        gen = GenConfig(n_s=4, n_t=5, n_p=2, sigma=sigma, chi=chi, phi_initial=2.0, seed=9)
        return model, spec, gen, SolverConfig(max_iterations=100, stationarity_tol=1e-8)

    def test_nested_datasets_never_lose_coverage(self):
        states = np.random.default_rng(0).uniform(-1, 1, size=(400, 2))
        datasets = [self._dataset(states[:n]) for n in (50, 100, 200, 400)]
        probes = np.random.default_rng(1).uniform(-1, 1, size=(300, 2))
        curve = theorem1_coverage_check(datasets, probes, 0.2)
        assert curve.records == [50, 100, 200, 400]
        assert np.all(np.diff(curve.median_distance) <= 0)
        assert curve.max_distance[-1] <= curve.max_distance[0]

    def test_epsilon_is_checked_at_largest_budget(self):
        grid = np.linspace(-1, 1, 41)[:, None]
        datasets = [self._dataset(grid[::4]), self._dataset(grid)]
        probes = np.linspace(-1, 1, 17)[:, None]
        assert theorem1_coverage_check(datasets, probes, 0.06).within_epsilon
        assert not theorem1_coverage_check(datasets, probes, 0.01).within_epsilon
        assert not theorem1_coverage_check(datasets[::-1], probes, 0.06).within_epsilon

    def test_needs_two_budgets(self):
        with pytest.raises(ValueError):
            theorem1_coverage_check([self._dataset(np.zeros((3, 2)))], np.zeros((1, 2)), 0.1)

    def test_needs_positive_epsilon(self):
        datasets = [self._dataset(np.zeros((3, 2))), self._dataset(np.ones((3, 2)))]
        with pytest.raises(ValueError):
            theorem1_coverage_check(datasets, np.zeros((1, 2)), 0.0)

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            theorem1_coverage_check([self._dataset(np.zeros((0, 2))), self._dataset(np.zeros((3, 2)))],
                                    np.zeros((1, 2)), 0.1)

    def test_coverage_datasets_are_nested_prefixes(self):
        model, spec, gen, solver_cfg = self._linear_setup("0.1", "-1:1")
        datasets = coverage_datasets(model, spec, gen, solver_cfg, 2)
        assert [len(ds) for ds in datasets] == [40, 80, 160]
        for smaller, larger in zip(datasets, datasets[1:]):
            np.testing.assert_array_equal(smaller.states, larger.states[:len(smaller)])
            np.testing.assert_array_equal(smaller.sequences, larger.sequences[:len(smaller)])
        assert [ds.header["gen"]["n_s"] for ds in datasets] == [4, 8, 16]
        assert [ds.header["record_count"] for ds in datasets] == [40, 80, 160]
        direct = generate_dataset(model, spec, gen, solver_cfg)
        np.testing.assert_array_equal(direct.states, datasets[0].states)

    def test_perturbed_trajectories_cover_the_box(self):
        model, spec, gen, solver_cfg = self._linear_setup("0.1", "-1:1")
        datasets = coverage_datasets(model, spec, gen, solver_cfg, 3)
        probes = np.linspace(-0.9, 0.9, 61)[:, None]
        curve = theorem1_coverage_check(datasets, probes, 0.3)
        assert curve.strictly_decreasing
        assert curve.within_epsilon

    def test_unperturbed_single_start_plateaus(self):
        model, spec, gen, solver_cfg = self._linear_setup("0", "0.8")
        datasets = coverage_datasets(model, spec, gen, solver_cfg, 3)
        probes = np.linspace(-0.9, 0.9, 61)[:, None]
        curve = theorem1_coverage_check(datasets, probes, 0.3)
        np.testing.assert_allclose(curve.median_distance, curve.median_distance[0], rtol=1e-3)
        assert not curve.within_epsilon


# =============================================================================
# Experiment drivers
# =============================================================================

class TestExperiments:

    def test_initial_states_reproducible_and_inside_box(self, linear_cfg):
        a = initial_states(linear_cfg, 6, 2)
        np.testing.assert_array_equal(a, initial_states(linear_cfg, 6, 2))
        assert np.all(np.abs(a) <= 1.0)

    def test_probe_states_pad_short_episodes(self):
        class Log:
            def __init__(self, states):
                self.states = states
        logs = [Log(np.arange(5.0)[:, None]), Log(np.arange(2.0)[:, None])]
        probes = probe_states(logs, 4)
        assert probes.shape == (4, 2, 1)
        np.testing.assert_array_equal(probes[:, 1, 0], [0.0, 1.0, 1.0, 1.0])

    def test_missing_denoiser(self, linear_cfg):
        with pytest.raises(ArtifactNotFound):
            controller_factories(linear_cfg, Artifacts(), ["diffusion"])

    def test_comparison_report(self, linear_cfg, tmp_path):
        factories = controller_factories(linear_cfg, Artifacts(), ["local_mpc"])
        factories["constant"] = lambda: ConstantController(linear_cfg.spec, linear_cfg.system, np.zeros(1))
        report = run_comparison(linear_cfg, factories)
        assert [row.controller for row in report.rows] == ["constant", "local_mpc"]
        assert max(row.cost_normalized for row in report.rows) == 1.0
        assert report.row("local_mpc").episodes == 3

        report.write(tmp_path / "a.csv")
        again = run_comparison(linear_cfg, factories)
        again.write(tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert "time_mean" not in (tmp_path / "a.csv").read_text()

    def test_threaded_episodes_match(self, linear_cfg):
        factories = controller_factories(linear_cfg, Artifacts(), ["local_mpc"])
        serial = run_comparison(linear_cfg, factories)
        threaded = run_comparison(linear_cfg, factories, workers=3)
        assert serial.episode_costs == threaded.episode_costs

    def test_ablation_points(self, linear_cfg):
        m_point = ablation_point(linear_cfg, AblationKind.M, 12)
        assert (m_point.control.candidates, m_point.control.restarts) == (12, 12)
        assert ablation_point(linear_cfg, AblationKind.H, 8).ocp.horizon == 8
        assert ablation_point(linear_cfg, AblationKind.K, 10).control.inference_steps == 10
        with pytest.raises(ConfigError):
            ablation_point(linear_cfg, AblationKind.K, 26)

    def test_m_ablation(self, linear_cfg, linear_denoiser):
        cfg = linear_cfg.updated("ablation", episodes=2)
        report = run_ablation(cfg, AblationKind.M, [3, 2], lambda point: Artifacts(denoiser=linear_denoiser),
                              solver_cfg=SolverConfig(max_iterations=10))
        assert [(row.value, row.controller) for row in report.rows] == [
            (2.0, "diffusion"), (2.0, "multistart_mpc"), (3.0, "diffusion"), (3.0, "multistart_mpc"),
        ]
        slopes = timing_slopes(report)
        assert set(slopes) == {"diffusion", "multistart_mpc"}

    def test_empty_grid(self, linear_cfg):
        with pytest.raises(ValueError):
            run_ablation(linear_cfg, AblationKind.M, [], lambda point: Artifacts())


# =============================================================================
# Command line
# =============================================================================

class TestCommandLine:

    def test_generate_is_byte_reproducible(self, config_file, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("DNMPC_OUTPUT_ROOT", str(tmp_path / "out"))
        assert main(["generate", "--config", str(config_file)]) == 0
        summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert summary["status"] == "ok"
        dataset = tmp_path / "out" / "datasets"
        files = list(dataset.glob("linear-*.dnds"))
        assert len(files) == 1
        first = files[0].read_bytes()

        assert main(["generate", "--config", str(config_file)]) == 0
        assert files[0].read_bytes() == first

    def test_missing_checkpoint_exits_with_input_error(self, config_file, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("DNMPC_OUTPUT_ROOT", str(tmp_path / "out"))
        missing = tmp_path / "missing.dnnn"
        code = main(["rollout", "--config", str(config_file), "--controller", "diffusion",
                     "--checkpoint", str(missing)])
        assert code == 1
        summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert summary["status"] == "error"
        assert str(missing) in summary["error"]

    def test_bad_override_exits_with_input_error(self, config_file, tmp_path, monkeypatch):
        monkeypatch.setenv("DNMPC_OUTPUT_ROOT", str(tmp_path / "out"))
        assert main(["generate", "--config", str(config_file), "--set", "ocp.bogus=1"]) == 1

    def test_unknown_subcommand(self):
        assert main(["fly", "--config", "x.cfg"]) == 1

    def test_local_rollout_writes_log(self, config_file, tmp_path, monkeypatch):
        monkeypatch.setenv("DNMPC_OUTPUT_ROOT", str(tmp_path / "out"))
        monkeypatch.setenv("DNMPC_LEDGER_ENABLED", "false")
        run_dir = tmp_path / "run"
        code = main(["rollout", "--config", str(config_file), "--controller", "local_mpc",
                     "--output", str(run_dir), "--set", "control.steps=3"])
        assert code == 0
        assert (run_dir / "rollout_local_mpc.csv").is_file()
        assert (run_dir / "rollout_local_mpc_timing.csv").is_file()
