"""Experiment orchestration: config, training, probes, payment surfaces, CSV/JSON artifacts.

Every run is driven by one seed; stage seeds are derived from it by fixed
offsets, randomness flows through numpy's PCG64 generator only, and no
timestamps enter the output files, so identical configs produce byte-identical
artifacts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .adjustment import (
    AnalyticAdjustment,
    PriorSupport,
    marginal_gains_check,
    existence_check,
    sample_prior,
)
from .allocation import optimize_acceptance
from .learner import LearnedAdjustment, TrainingConfig, save_model, train
from .model import EconomyView, make_cost, make_valuation
from .payments import ZeroAdjustment, tau_for_producer, total_payment
from .verification import (
    SURPLUS_TOL,
    check_ir,
    check_surplus_monotonicity,
    check_wbb,
    loss_components,
    mixed_deviation_sampler,
    probe_dsic,
    uniform_economy_sampler,
)

Array = np.ndarray

__all__ = [
    "SurfaceGrid",
    "SurfaceRecord",
    "ExperimentConfig",
    "ExperimentResult",
    "payment_surface",
    "ir_wbb_sweep",
    "run_experiment",
    "sample_prior",
]

# stage seed offsets relative to the config seed
_SEED_EXISTENCE = 11
_SEED_MARGINAL_GAINS = 12
_SEED_DSIC = 21
_SEED_IR_WBB = 41
_SEED_MONOTONICITY = 51


@dataclass(frozen=True)
class SurfaceGrid:
    """Grid over producer 0's reported capacity and cost type, others pinned."""

    x_points: int = 50
    gamma_points: int = 50
    x_lo: float = 0.0
    x_hi: float = 5.0
    gamma_lo: float = 0.0
    gamma_hi: float = 1.0
    fixed_capacity: float = 2.5
    fixed_gamma: float = 0.5
    fixed_theta: float = 0.5

    def __post_init__(self):
        if self.x_points < 1 or self.gamma_points < 1:
            raise ValueError("surface grid needs at least one point per axis")

    def to_dict(self) -> dict:
        return {
            "x_points": self.x_points,
            "gamma_points": self.gamma_points,
            "x_lo": self.x_lo,
            "x_hi": self.x_hi,
            "gamma_lo": self.gamma_lo,
            "gamma_hi": self.gamma_hi,
            "fixed_capacity": self.fixed_capacity,
            "fixed_gamma": self.fixed_gamma,
            "fixed_theta": self.fixed_theta,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SurfaceGrid":
        return cls(**doc)


@dataclass
class SurfaceRecord:
    """Payment to producer 0 over the report grid, with its pivot/adjustment split."""

    x_values: Array        # (K,)
    gamma_values: Array    # (L,)
    tau: Array             # (K, L)
    payments: Array        # (K, L) tau + adjustment
    adjustment: float      # constant across the grid: it never reads producer 0's report
    fixed: dict

    def monotone_in_capacity(self, tol: float = 1e-6) -> bool:
        return bool(np.all(np.diff(self.payments, axis=0) >= -tol))

    def monotone_in_gamma(self, tol: float = 1e-6) -> bool:
        return bool(np.all(np.diff(self.payments, axis=1) <= tol))

    def plateau_gap(self) -> float:
        """Worst distance between the highest-cost-column payment and the adjustment alone."""
        return float(np.abs(self.payments[:, -1] - self.adjustment).max())


def payment_surface(
    valuation,
    cost,
    n: int,
    m: int,
    adjustment=None,
    grid: SurfaceGrid | None = None,
    method: str | None = None,
) -> SurfaceRecord:
    """Evaluate producer 0's payment over a grid of its own reports.

    All other producers report ``fixed_capacity``/``fixed_gamma`` and all
    consumers ``fixed_theta``; reports are taken at face value (no
    punishment). The producer-removed problem and the adjustment are constant
    across the grid and solved once.
    """
    if grid is None:
        grid = SurfaceGrid()
    if adjustment is None:
        adjustment = ZeroAdjustment()
    caps_others = np.full((n - 1, 1), grid.fixed_capacity)
    gammas_others = np.full(n - 1, grid.fixed_gamma)
    thetas = np.full(m, grid.fixed_theta)
    removed_view = EconomyView(caps_others, gammas_others, thetas, valuation, cost)
    removed = optimize_acceptance(removed_view, method=method)
    h0 = float(adjustment(0, caps_others, gammas_others, thetas))

    x_values = np.linspace(grid.x_lo, grid.x_hi, grid.x_points)
    gamma_values = np.linspace(grid.gamma_lo, grid.gamma_hi, grid.gamma_points)
    tau = np.empty((grid.x_points, grid.gamma_points))
    for a, x0 in enumerate(x_values):
        for b, g0 in enumerate(gamma_values):
            caps = np.vstack(([[x0]], caps_others))
            gammas = np.concatenate(([g0], gammas_others))
            view = EconomyView(caps, gammas, thetas, valuation, cost)
            full = optimize_acceptance(view, method=method)
            tau[a, b] = tau_for_producer(view, full, removed, 0)
    return SurfaceRecord(
        x_values=x_values,
        gamma_values=gamma_values,
        tau=tau,
        payments=tau + h0,
        adjustment=h0,
        fixed={
            "capacity": grid.fixed_capacity,
            "gamma": grid.fixed_gamma,
            "theta": grid.fixed_theta,
            "n": n,
            "m": m,
        },
    )


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 10
    m: int = 2
    valuation_tag: str = "sqrt_sum"
    cost_tag: str = "linear"
    scale: float | None = None  # synergy multiplier; defaults to n
    cap_bounds: tuple[float, float] = (0.0, 5.0)
    gamma_bounds: tuple[float, float] = (0.0, 1.0)
    theta_bounds: tuple[float, float] = (0.0, 1.0)
    training: TrainingConfig = field(default_factory=lambda: TrainingConfig(momentum=0.9))
    method: str | None = None
    punishment: float = 1e6
    surface: SurfaceGrid = field(default_factory=SurfaceGrid)
    dsic_trials: int = 200
    dsic_deviations: int = 20
    ir_samples: int = 2000
    monotonicity_trials: int = 1000
    existence_samples: int = 2000
    seed: int = 0

    def support(self) -> PriorSupport:
        return PriorSupport.uniform_box(
            self.n, self.m, cap=self.cap_bounds, gamma=self.gamma_bounds, theta=self.theta_bounds
        )

    def families(self):
        scale = self.scale if self.scale is not None else float(self.n)
        return make_valuation(self.valuation_tag, scale=scale), make_cost(self.cost_tag)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "valuation_tag": self.valuation_tag,
            "cost_tag": self.cost_tag,
            "scale": self.scale,
            "cap_bounds": list(self.cap_bounds),
            "gamma_bounds": list(self.gamma_bounds),
            "theta_bounds": list(self.theta_bounds),
            "training": self.training.to_dict(),
            "method": self.method,
            "punishment": self.punishment,
            "surface": self.surface.to_dict(),
            "dsic_trials": self.dsic_trials,
            "dsic_deviations": self.dsic_deviations,
            "ir_samples": self.ir_samples,
            "monotonicity_trials": self.monotonicity_trials,
            "existence_samples": self.existence_samples,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        if "training" in doc:
            doc["training"] = TrainingConfig.from_dict(doc["training"])
        if "surface" in doc:
            doc["surface"] = SurfaceGrid.from_dict(doc["surface"])
        for key in ("cap_bounds", "gamma_bounds", "theta_bounds"):
            if key in doc:
                doc[key] = tuple(doc[key])
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=seed, training=replace(self.training, seed=seed))


# ---------------------------------------------------------------------------
# artifact writers
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".9g")
    return str(value)


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_report(path, report: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def surface_rows(record: SurfaceRecord):
    for a, x0 in enumerate(record.x_values):
        for b, g0 in enumerate(record.gamma_values):
            yield (x0, g0, record.tau[a, b], record.adjustment, record.payments[a, b])


# ---------------------------------------------------------------------------
# sampled IR / WBB sweep with instance-wise loss equivalence
# ---------------------------------------------------------------------------


def ir_wbb_sweep(
    support: PriorSupport,
    valuation,
    cost,
    adjustment=None,
    samples: int = 1000,
    seed: int = 0,
    punishment: float = 1e6,
    method: str | None = None,
    min_pass_rate: float = 1.0,
    max_mean_penalty: float | None = None,
) -> dict:
    """Truthful payment runs over prior draws, checking rationality and budget per instance.

    Also asserts, instance by instance, that the rationality penalty term is
    zero exactly when the rationality probe passes, and likewise for the
    budget term (the loss/probe equivalence); mismatches always fail the
    sweep. Exact adjustments (zero, analytic) should be held to
    ``min_pass_rate=1.0`` at the strict tolerance. A trained network controls
    only the expected penalty, so it is gated by ``max_mean_penalty`` (a
    fresh-sample bound on its training loss) while its strict pass rate is
    still reported for inspection.
    """
    sampler = uniform_economy_sampler(support, valuation, cost)
    rng = np.random.default_rng(seed)
    ir_violations: list = []
    wbb_violations: list = []
    mismatches: list = []
    clean = 0
    penalty_sum = 0.0
    worst_utility = np.inf
    worst_slack = np.inf
    for k in range(samples):
        economy = sampler(rng)
        payments = total_payment(
            economy, adjustment=adjustment, punishment=punishment, method=method
        )
        ir = check_ir(economy, payments)
        wbb = check_wbb(economy, payments)
        worst_utility = min(worst_utility, float(payments.utilities.min()))
        worst_slack = min(worst_slack, payments.budget_slack)
        if ir.passed and wbb.passed:
            clean += 1
        if not ir.passed:
            ir_violations.append({"sample": k, **ir.violations[0]})
        if not wbb.passed:
            wbb_violations.append({"sample": k, **wbb.violations[0]})
        term1, term2 = loss_components(payments)
        penalty_sum += term1 + term2
        if (term1 <= economy.n * SURPLUS_TOL) != ir.passed:
            mismatches.append({"sample": k, "kind": "rationality", "term": term1, "probe": ir.passed})
        if (term2 <= SURPLUS_TOL) != wbb.passed:
            mismatches.append({"sample": k, "kind": "budget", "term": term2, "probe": wbb.passed})
    pass_rate = clean / samples
    mean_penalty = penalty_sum / samples
    rate_ok = pass_rate >= min_pass_rate
    penalty_ok = max_mean_penalty is None or mean_penalty <= max_mean_penalty
    return {
        "samples": samples,
        "ir_violations": len(ir_violations),
        "wbb_violations": len(wbb_violations),
        "equivalence_mismatches": len(mismatches),
        "pass_rate": pass_rate,
        "min_pass_rate": min_pass_rate,
        "mean_penalty": mean_penalty,
        "max_mean_penalty": max_mean_penalty,
        "worst_utility": worst_utility,
        "worst_budget_slack": worst_slack,
        "passed": rate_ok and penalty_ok and not mismatches,
        "witnesses": (ir_violations + wbb_violations + mismatches)[:10],
    }


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------


@dataclass
class ExperimentResult:
    passed: bool
    report: dict
    out_dir: Path
    model: LearnedAdjustment


def run_experiment(config: ExperimentConfig, out_dir) -> ExperimentResult:
    """Train the adjustment networks, run every probe, and emit all artifacts.

    Writes ``loss_trace.csv``, ``model.json``, ``surface.csv`` and
    ``report.json`` under ``out_dir``. The report carries a failing probe's
    witnesses; ``passed`` is False if any probe failed.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    support = config.support()
    valuation, cost = config.families()

    model, trace = train(valuation, cost, support, config.training, method=config.method)
    write_csv(
        out / "loss_trace.csv",
        ["epoch", "loss"],
        ((epoch, loss) for epoch, loss in enumerate(trace.losses)),
    )
    save_model(model, out / "model.json")

    existence = existence_check(
        support, valuation, cost, samples=config.existence_samples,
        seed=config.seed + _SEED_EXISTENCE, method=config.method,
    )
    marginal_gains = marginal_gains_check(
        support, valuation, cost, samples=config.existence_samples,
        seed=config.seed + _SEED_MARGINAL_GAINS, method=config.method,
    )

    economy_sampler = uniform_economy_sampler(support, valuation, cost)
    deviation_sampler = mixed_deviation_sampler(support)
    adjustments = {
        "zero": ZeroAdjustment(),
        "analytic": AnalyticAdjustment(support, valuation, cost, method=config.method),
        "learned": model,
    }
    dsic_reports = {}
    for offset, (name, adj) in enumerate(adjustments.items()):
        dsic_reports[name] = probe_dsic(
            economy_sampler,
            deviation_sampler,
            adjustment=adj,
            trials=config.dsic_trials,
            deviations_per_trial=config.dsic_deviations,
            seed=config.seed + _SEED_DSIC + offset,
            punishment=config.punishment,
            method=config.method,
        ).to_dict()

    # exact adjustments must be feasible on every instance; the trained network
    # is certified on its expected penalty, the quantity training controls
    learned_penalty_cap = 10.0 * config.training.loss_tol
    ir_wbb_reports = {
        name: ir_wbb_sweep(
            support, valuation, cost, adjustment=adj, samples=config.ir_samples,
            seed=config.seed + _SEED_IR_WBB + offset, punishment=config.punishment,
            method=config.method,
            min_pass_rate=0.0 if name == "learned" else 1.0,
            max_mean_penalty=learned_penalty_cap if name == "learned" else None,
        )
        for offset, (name, adj) in enumerate(adjustments.items())
    }

    monotonicity = check_surplus_monotonicity(
        economy_sampler, trials=config.monotonicity_trials,
        seed=config.seed + _SEED_MONOTONICITY, method=config.method,
    )

    surface = payment_surface(
        valuation, cost, config.n, config.m, adjustment=model,
        grid=config.surface, method=config.method,
    )
    write_csv(
        out / "surface.csv",
        ["x0", "gamma0", "tau0", "adjustment0", "p0"],
        surface_rows(surface),
    )
    surface_report = {
        "monotone_in_capacity": surface.monotone_in_capacity(),
        "monotone_in_gamma": surface.monotone_in_gamma(),
        "plateau_gap": surface.plateau_gap(),
        "plateau_matches_adjustment": surface.plateau_gap() <= 1e-3,
    }

    passed = (
        trace.final_loss <= config.training.loss_tol
        and existence.passed
        and marginal_gains.passed
        and all(r["passed"] for r in dsic_reports.values())
        and all(r["passed"] for r in ir_wbb_reports.values())
        and monotonicity.passed
        and surface_report["monotone_in_capacity"]
        and surface_report["monotone_in_gamma"]
        and surface_report["plateau_matches_adjustment"]
    )
    report = {
        "config": config.to_dict(),
        "training": {"epochs_run": trace.epochs_run, "final_loss": trace.final_loss},
        "existence": existence.to_dict(),
        "marginal_gains": marginal_gains.to_dict(),
        "dsic": dsic_reports,
        "ir_wbb": ir_wbb_reports,
        "surplus_monotonicity": monotonicity.to_dict(),
        "surface": surface_report,
        "passed": passed,
    }
    write_report(out / "report.json", report)
    return ExperimentResult(passed=passed, report=report, out_dir=out, model=model)
