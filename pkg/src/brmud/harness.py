"""Configuration-driven Monte Carlo harness.

run_sweep draws, per (M, trial) point, one received signal that every
algorithm detects on (paired comparison), scores exact-support recovery, and
emits a CSV of trial records plus a JSON summary with Wilson intervals.
Determinism contract: records depend only on the config; the per-trial seed
is SeedSequence((master_seed, M, trial)), the code matrix seed is
master_seed, and records are sorted by (M, algorithm, trial) before writing,
so the CSV is byte-identical across reruns and worker counts. Wall times are
aggregated in the JSON summary only.

audit_lemma1 measures, per trial, the decoder's worst-case real perturbation
correlation max_l |Re D_l^T (vartheta - u)| (the simulator knows u and
vartheta), the frequency of that statistic staying below tau (event Sigma),
the out-of-support/in-support correlation inequalities on Sigma-trials, and
compares the empirical error rate to the analytic bound when the threshold
window is feasible; with an infeasible window it reports infeasibility
instead of a vacuous comparison.

emit_figure_data instantiates a named figure's parameter grid and runs the
sweep per cell, producing plot-ready CSV rows.
"""
from __future__ import annotations

import hashlib
import importlib.metadata
import json
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy

from .channel import ChannelParams, sample_active_set, synthesize_received
from .codes import generate_code_matrix
from .decoders import (DecoderMatrix, design_decoder_mmse,
                       design_decoder_optimal, mmse_delta,
                       scaled_code_decoder)
from .greedy import (cmud_detect, detection_error_bound, estimate_user_count,
                     thresholds_from_stats)
from .mismatch import LambdaMoments, moments
from .sparse import (LASSO_NOISELESS_XI, TlsConfig, lasso_detect,
                     lp_tls_detect)

ALGORITHMS = ("cmud-scaled", "cmud-d1", "cmud-d2", "lasso", "tls")

CSV_COLUMNS = ("trial", "M", "K", "L", "sigma_e", "sigma_eta", "sigma_theta",
               "algorithm", "exact_success", "missed", "false_alarms",
               "child_seed")

FIGURE_CSV_COLUMNS = ("figure", "M", "K", "sigma_e", "sigma_eta",
                      "sigma_theta", "algorithm", "p_e", "ci_low", "ci_high",
                      "trials")

FIGURE_IDS = ("1", "2a", "2b", "3a", "3b", "4a", "4b")

# reuse a cached designed decoder when the design user count moved by
# at most this relative amount
DECODER_REUSE_DRIFT = 0.2


@dataclass
class CmudSettings:
    nu: float = 1.0
    M0_policy: str = "estimated"        # fixed | estimated
    M0: int | None = None               # fixed-policy override; None = true M
    kappa_policy: str | float = "adaptive"


@dataclass
class TlsSettings:
    p: float = 0.5
    xi: float | None = None             # None = scale from noise moments
    max_outer: int = 60
    max_inner: int = 30
    max_dual_steps: int = 40
    stop_tol: float = 1e-3
    weight_eps: float = 1e-3
    dual_step0: float = 1.0


@dataclass
class LassoSettings:
    xi: float | None = None             # None = scale from noise moments


def _default_channel() -> ChannelParams:
    return ChannelParams(sigma_h_sq=1.0, theta_deg=5.0)


@dataclass
class ExperimentConfig:
    L: int = 144
    K: int = 256
    M_list: tuple = (2, 4, 6, 8, 10)
    channel: ChannelParams = field(default_factory=_default_channel)
    trials: int = 400
    master_seed: int = 0
    algorithms: tuple = ALGORITHMS
    cmud: CmudSettings = field(default_factory=CmudSettings)
    tls: TlsSettings = field(default_factory=TlsSettings)
    lasso: LassoSettings = field(default_factory=LassoSettings)
    varrho: float = 0.999
    workers: int = 1
    allow_collisions: bool = False
    moment_draws: int = 10 ** 6


@dataclass
class TrialRecord:
    trial: int
    M: int
    K: int
    L: int
    algorithm: str
    exact_success: bool
    missed: int
    false_alarms: int
    child_seed: str
    runtime_ms: float       # JSON summary only; kept out of the CSV


@dataclass
class SweepResult:
    records: list
    summary: dict
    csv_text: str


def validate_config(config: ExperimentConfig) -> None:
    """Raise ValueError naming every invalid field."""
    problems = []
    if not isinstance(config.L, int) or config.L < 1:
        problems.append("L: must be a positive integer")
    if not isinstance(config.K, int) or config.K <= config.L:
        problems.append("K: must be an integer exceeding L")
    M_list = tuple(config.M_list)
    if len(M_list) == 0:
        problems.append("M_list: must be nonempty")
    for M in M_list:
        if not isinstance(M, (int, np.integer)) or M < 0 or M > config.K:
            problems.append(f"M_list: entry {M!r} outside [0, K]")
    if len(set(M_list)) != len(M_list):
        problems.append("M_list: duplicate entries")
    if not isinstance(config.channel, ChannelParams):
        problems.append("channel: must be ChannelParams")
    if config.trials < 1:
        problems.append("trials: must be at least 1")
    if not isinstance(config.master_seed, int) or config.master_seed < 0:
        problems.append("master_seed: must be a nonnegative integer")
    algorithms = tuple(config.algorithms)
    if len(algorithms) == 0:
        problems.append("algorithms: must be nonempty")
    for alg in algorithms:
        if alg not in ALGORITHMS:
            problems.append(f"algorithms: unknown algorithm {alg!r}")
    if len(set(algorithms)) != len(algorithms):
        problems.append("algorithms: duplicate entries")
    if config.cmud.M0_policy not in ("fixed", "estimated"):
        problems.append("cmud.M0_policy: must be 'fixed' or 'estimated'")
    if config.cmud.nu <= 0:
        problems.append("cmud.nu: must be positive")
    if config.cmud.M0 is not None and config.cmud.M0 < 1:
        problems.append("cmud.M0: must be at least 1 when set")
    kp = config.cmud.kappa_policy
    if not isinstance(kp, (int, float)) and kp not in ("window-midpoint", "adaptive"):
        problems.append(
            "cmud.kappa_policy: must be 'adaptive', 'window-midpoint' or a number")
    if not 0.0 < config.tls.p <= 1.0:
        problems.append("tls.p: must be in (0, 1]")
    if config.tls.xi is not None and config.tls.xi <= 0:
        problems.append("tls.xi: must be positive when set")
    if config.tls.weight_eps <= 0:
        problems.append("tls.weight_eps: must be positive")
    if not 0.0 <= config.tls.stop_tol <= 1.0:
        problems.append("tls.stop_tol: must be in [0, 1]")
    for name in ("max_outer", "max_inner", "max_dual_steps"):
        if getattr(config.tls, name) < 1:
            problems.append(f"tls.{name}: must be at least 1")
    if config.tls.dual_step0 <= 0:
        problems.append("tls.dual_step0: must be positive")
    if config.lasso.xi is not None and config.lasso.xi <= 0:
        problems.append("lasso.xi: must be positive when set")
    if not 0.0 < config.varrho < 1.0:
        problems.append("varrho: must be in (0, 1)")
    if config.workers < 1:
        problems.append("workers: must be at least 1")
    if not isinstance(config.allow_collisions, bool):
        problems.append("allow_collisions: must be a boolean")
    if config.moment_draws < 10 ** 6:
        problems.append("moment_draws: must be at least 1e6")
    if problems:
        raise ValueError("invalid config: " + "; ".join(problems))


# ---------------------------------------------------------------------------
# config serialization (flat key=value text)

def _fmt_opt(v) -> str:
    return "auto" if v is None else repr(v)


def config_to_text(config: ExperimentConfig) -> str:
    """Canonical flat key=value rendering; parse_config_text inverts it."""
    ch = config.channel
    lines = [
        f"L={config.L}",
        f"K={config.K}",
        "M_list=" + ",".join(str(m) for m in config.M_list),
        f"trials={config.trials}",
        f"master_seed={config.master_seed}",
        "algorithms=" + ",".join(config.algorithms),
        f"varrho={config.varrho!r}",
        f"workers={config.workers}",
        f"allow_collisions={str(config.allow_collisions).lower()}",
        f"moment_draws={config.moment_draws}",
        f"channel.sigma_h_sq={ch.sigma_h_sq!r}",
        f"channel.sigma_e_sq={ch.sigma_e_sq!r}",
        f"channel.sigma_eta_sq={ch.sigma_eta_sq!r}",
        f"channel.theta_deg={ch.theta_deg!r}",
        f"channel.noise_var={ch.noise_var!r}",
        f"cmud.nu={config.cmud.nu!r}",
        f"cmud.M0_policy={config.cmud.M0_policy}",
        "cmud.M0=" + ("none" if config.cmud.M0 is None else str(config.cmud.M0)),
        f"cmud.kappa_policy={config.cmud.kappa_policy}",
        f"tls.p={config.tls.p!r}",
        "tls.xi=" + _fmt_opt(config.tls.xi),
        f"tls.max_outer={config.tls.max_outer}",
        f"tls.max_inner={config.tls.max_inner}",
        f"tls.max_dual_steps={config.tls.max_dual_steps}",
        f"tls.stop_tol={config.tls.stop_tol!r}",
        f"tls.weight_eps={config.tls.weight_eps!r}",
        f"tls.dual_step0={config.tls.dual_step0!r}",
        "lasso.xi=" + _fmt_opt(config.lasso.xi),
    ]
    return "\n".join(lines) + "\n"


def _parse_bool(s: str) -> bool:
    if s.lower() in ("true", "1", "yes"):
        return True
    if s.lower() in ("false", "0", "no"):
        return False
    raise ValueError(s)


def _parse_int_tuple(s: str) -> tuple:
    return tuple(int(tok.strip()) for tok in s.split(",") if tok.strip())


def _parse_str_tuple(s: str) -> tuple:
    return tuple(tok.strip() for tok in s.split(",") if tok.strip())


def _parse_opt_float(s: str):
    return None if s.lower() == "auto" else float(s)


def _parse_opt_int(s: str):
    return None if s.lower() in ("none", "auto") else int(s)


def _parse_kappa(s: str):
    return s if s in ("window-midpoint", "adaptive") else float(s)


_CONFIG_KEYS = {
    "L": ("top", "L", int),
    "K": ("top", "K", int),
    "M_list": ("top", "M_list", _parse_int_tuple),
    "trials": ("top", "trials", int),
    "master_seed": ("top", "master_seed", int),
    "algorithms": ("top", "algorithms", _parse_str_tuple),
    "varrho": ("top", "varrho", float),
    "workers": ("top", "workers", int),
    "allow_collisions": ("top", "allow_collisions", _parse_bool),
    "moment_draws": ("top", "moment_draws", int),
    "channel.sigma_h_sq": ("channel", "sigma_h_sq", float),
    "channel.sigma_e_sq": ("channel", "sigma_e_sq", float),
    "channel.sigma_eta_sq": ("channel", "sigma_eta_sq", float),
    "channel.theta_deg": ("channel", "theta_deg", float),
    "channel.noise_var": ("channel", "noise_var", float),
    "cmud.nu": ("cmud", "nu", float),
    "cmud.M0_policy": ("cmud", "M0_policy", str),
    "cmud.M0": ("cmud", "M0", _parse_opt_int),
    "cmud.kappa_policy": ("cmud", "kappa_policy", _parse_kappa),
    "tls.p": ("tls", "p", float),
    "tls.xi": ("tls", "xi", _parse_opt_float),
    "tls.max_outer": ("tls", "max_outer", int),
    "tls.max_inner": ("tls", "max_inner", int),
    "tls.max_dual_steps": ("tls", "max_dual_steps", int),
    "tls.stop_tol": ("tls", "stop_tol", float),
    "tls.weight_eps": ("tls", "weight_eps", float),
    "tls.dual_step0": ("tls", "dual_step0", float),
    "lasso.xi": ("lasso", "xi", _parse_opt_float),
}


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse the flat key=value config format (# comments, blank lines ok).

    Channel fields not present fall back to the sweep defaults (sigma_h_sq=1,
    theta_deg=5, everything else 0).
    """
    sections = {"top": {}, "channel": {}, "cmud": {}, "tls": {}, "lasso": {}}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not sep:
            raise ValueError(f"config line {lineno}: expected key=value, got {raw!r}")
        if key not in _CONFIG_KEYS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        section, fname, parser = _CONFIG_KEYS[key]
        try:
            parsed = parser(value)
        except (ValueError, TypeError):
            raise ValueError(
                f"config line {lineno}: bad value for {key}: {value!r}") from None
        if fname in sections[section]:
            raise ValueError(f"config line {lineno}: duplicate key {key!r}")
        sections[section][fname] = parsed

    channel_fields = dict(sigma_h_sq=1.0, sigma_e_sq=0.0, sigma_eta_sq=0.0,
                          theta_deg=5.0, noise_var=0.0)
    channel_fields.update(sections["channel"])
    return ExperimentConfig(
        channel=ChannelParams(**channel_fields),
        cmud=CmudSettings(**sections["cmud"]),
        tls=TlsSettings(**sections["tls"]),
        lasso=LassoSettings(**sections["lasso"]),
        **sections["top"],
    )


def config_sha256(config: ExperimentConfig) -> str:
    return hashlib.sha256(config_to_text(config).encode()).hexdigest()


# ---------------------------------------------------------------------------
# statistics helpers

_Z95 = 1.959963984540054


def wilson_interval(successes: int, n: int) -> tuple:
    """Wilson 95% score interval for a binomial proportion."""
    if n == 0:
        return (0.0, 1.0)
    z2 = _Z95 * _Z95
    phat = successes / n
    denom = 1.0 + z2 / n
    center = (phat + z2 / (2 * n)) / denom
    half = _Z95 * np.sqrt(phat * (1 - phat) / n + z2 / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def _sigma_columns(channel: ChannelParams) -> tuple:
    return (float(np.sqrt(channel.sigma_e_sq)),
            float(np.sqrt(channel.sigma_eta_sq)),
            float(np.sqrt(channel.noise_var)))


def _moments_rng(master_seed: int) -> np.random.Generator:
    # 2-entry spawn key; trial keys are 3-entry, so no collision
    return np.random.default_rng(np.random.SeedSequence((master_seed, 1)))


def _trial_rng(master_seed: int, M: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((master_seed, M, trial)))


def _draw_trial(C, config: ExperimentConfig, M: int, trial: int):
    rng = _trial_rng(config.master_seed, M, trial)
    K = config.K
    if config.allow_collisions:
        S = np.sort(rng.choice(K, size=M, replace=True))
    else:
        S = sample_active_set(K, M, rng)
    y, draw, model = synthesize_received(C, S, config.channel, rng)
    return S, y, draw, model


# ---------------------------------------------------------------------------
# decoder provisioning

class _DecoderCache:
    """Designed decoders keyed by algorithm, reused across sweep points while
    the design user count stays within DECODER_REUSE_DRIFT of a cached one."""

    def __init__(self, C, mom: LambdaMoments, noise_var: float, nu: float):
        self.C = C
        self.mom = mom
        self.noise_var = noise_var
        self.nu = nu
        self.K = C.shape[1]
        self._scaled = None
        self._designed = {"cmud-d1": [], "cmud-d2": []}

    def get(self, algorithm: str, M0: int) -> DecoderMatrix:
        if algorithm == "cmud-scaled":
            if self._scaled is None:
                self._scaled = scaled_code_decoder(self.C)
            return self._scaled
        for m0_cached, dec in self._designed[algorithm]:
            if abs(M0 - m0_cached) <= DECODER_REUSE_DRIFT * m0_cached:
                return dec
        dec = self._design(algorithm, M0)
        self._designed[algorithm].append((M0, dec))
        return dec

    def _design(self, algorithm: str, M0: int) -> DecoderMatrix:
        eps = M0 / self.K
        if algorithm == "cmud-d2":
            delta = mmse_delta(eps, self.mom.mu_r, self.mom.m2_r)
            return design_decoder_mmse(self.C, delta, self.noise_var)
        Upsilon = float(
            np.sqrt(2.0 * (1.0 + self.nu) * np.log(self.K))
            * np.sqrt(M0 * self.mom.sigma_r_sq + self.noise_var / 2.0))
        return design_decoder_optimal(self.C, eps, self.mom.mu_r, M0, Upsilon)


def _design_count(config: ExperimentConfig, C, mom: LambdaMoments,
                  M: int) -> int:
    """User count a designed decoder (and fixed-policy thresholds) should
    assume at sweep point M."""
    if config.cmud.M0_policy == "fixed":
        return config.cmud.M0 if config.cmud.M0 is not None else max(M, 1)
    _, y, _, _ = _draw_trial(C, config, M, 0)
    est = estimate_user_count(y, mom, config.channel.noise_var, config.L,
                              config.K)
    return max(est, 1)


# ---------------------------------------------------------------------------
# per-trial algorithm runs

def _resolve_xi(setting_xi, config: ExperimentConfig, mom: LambdaMoments,
                M_hat: int, flat: float = TlsConfig.xi) -> float:
    """Explicit xi wins; otherwise sqrt(2 log K) over the interference scale
    at the estimated user count; flat default when that scale vanishes."""
    if setting_xi is not None:
        return setting_xi
    sigma_w_sq = M_hat * mom.sigma_r_sq + config.channel.noise_var / 2.0
    if sigma_w_sq <= 0:
        return flat
    return float(np.sqrt(2.0 * np.log(config.K) / sigma_w_sq))


def _run_point_trial(config: ExperimentConfig, C, mom: LambdaMoments,
                     decoders: dict, design_M0: int, M: int,
                     trial: int) -> list:
    S, y, _, _ = _draw_trial(C, config, M, trial)
    true_set = set(int(k) for k in np.unique(S))
    noise_var = config.channel.noise_var

    estimated_M = None

    def per_trial_count():
        nonlocal estimated_M
        if estimated_M is None:
            estimated_M = max(
                estimate_user_count(y, mom, noise_var, config.L, config.K), 1)
        return estimated_M

    records = []
    for algorithm in config.algorithms:
        t0 = time.perf_counter()
        if algorithm.startswith("cmud"):
            dec = decoders[algorithm]
            M0 = (design_M0 if config.cmud.M0_policy == "fixed"
                  else per_trial_count())
            thresholds = thresholds_from_stats(
                (dec.coh_alpha, dec.coh_beta, dec.coh_gamma), mom, noise_var,
                M0, config.cmud.nu, config.K)
            result = cmud_detect(C, dec.entries, y, thresholds,
                                 config.cmud.kappa_policy)
            support = result.detected
        elif algorithm == "tls":
            xi = _resolve_xi(config.tls.xi, config, mom, per_trial_count())
            cfg = TlsConfig(p=config.tls.p, xi=xi,
                            max_outer=config.tls.max_outer,
                            max_inner=config.tls.max_inner,
                            max_dual_steps=config.tls.max_dual_steps,
                            stop_tol=config.tls.stop_tol,
                            weight_eps=config.tls.weight_eps,
                            dual_step0=config.tls.dual_step0)
            support, _, _ = lp_tls_detect(C, y, cfg)
        else:
            xi = _resolve_xi(config.lasso.xi, config, mom, per_trial_count(),
                             flat=LASSO_NOISELESS_XI)
            support, _ = lasso_detect(C, y, xi)
        runtime_ms = (time.perf_counter() - t0) * 1000.0

        found = set(int(k) for k in support)
        missed = len(true_set - found)
        false_alarms = len(found - true_set)
        records.append(TrialRecord(
            trial=trial, M=M, K=config.K, L=config.L, algorithm=algorithm,
            exact_success=(missed == 0 and false_alarms == 0),
            missed=missed, false_alarms=false_alarms,
            child_seed=f"{config.master_seed}-{M}-{trial}",
            runtime_ms=runtime_ms,
        ))
    return records


def _map_trials(worker, trials: int, workers: int) -> list:
    if workers <= 1:
        batches = [worker(t) for t in range(trials)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(worker, range(trials)))
    return [rec for batch in batches for rec in batch]


# ---------------------------------------------------------------------------
# sweep

def records_to_csv(records: list, channel: ChannelParams) -> str:
    sigma_e, sigma_eta, sigma_theta = ("%.6g" % v
                                       for v in _sigma_columns(channel))
    lines = [",".join(CSV_COLUMNS)]
    ordered = sorted(records, key=lambda r: (r.M, r.algorithm, r.trial))
    for r in ordered:
        lines.append(",".join((
            str(r.trial), str(r.M), str(r.K), str(r.L),
            sigma_e, sigma_eta, sigma_theta, r.algorithm,
            "true" if r.exact_success else "false",
            str(r.missed), str(r.false_alarms), r.child_seed,
        )))
    return "\n".join(lines) + "\n"


def _summarize(records: list, config: ExperimentConfig) -> dict:
    points = {}
    for r in records:
        points.setdefault((r.M, r.K, r.algorithm), []).append(r)
    rows = []
    for (M, K, algorithm) in sorted(points, key=lambda k: (k[0], k[1], k[2])):
        recs = points[(M, K, algorithm)]
        n = len(recs)
        errors = sum(1 for r in recs if not r.exact_success)
        lo, hi = wilson_interval(errors, n)
        runtimes = [r.runtime_ms for r in recs]
        rows.append({
            "algorithm": algorithm, "M": M, "K": K, "trials": n,
            "errors": errors, "p_e": errors / n,
            "ci_low": lo, "ci_high": hi,
            "runtime_ms_mean": float(np.mean(runtimes)),
            "runtime_ms_total": float(np.sum(runtimes)),
        })
    ch = config.channel
    return {
        "schema": "brmud-sweep-summary-v1",
        "config_sha256": config_sha256(config),
        "master_seed": config.master_seed,
        "L": config.L, "K": config.K, "trials": config.trials,
        "varrho": config.varrho,
        "channel": {
            "sigma_h_sq": ch.sigma_h_sq, "sigma_e_sq": ch.sigma_e_sq,
            "sigma_eta_sq": ch.sigma_eta_sq, "theta_deg": ch.theta_deg,
            "noise_var": ch.noise_var,
        },
        "points": rows,
    }


def build_manifest(config: ExperimentConfig) -> dict:
    try:
        pkg_version = importlib.metadata.version("brmud")
    except importlib.metadata.PackageNotFoundError:
        pkg_version = "unknown"
    return {
        "config_sha256": config_sha256(config),
        "versions": {
            "brmud": pkg_version,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }


def _write_outputs(out_dir, config: ExperimentConfig, files: dict) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, content in files.items():
        path = out / name
        if isinstance(content, str):
            path.write_text(content)
        else:
            path.write_text(json.dumps(content, indent=2) + "\n")
    (out / "manifest.json").write_text(
        json.dumps(build_manifest(config), indent=2) + "\n")


def run_sweep(config: ExperimentConfig, out_dir=None) -> SweepResult:
    """Run the Monte Carlo sweep; optionally write records.csv, summary.json,
    and manifest.json under out_dir."""
    validate_config(config)
    C = generate_code_matrix(config.L, config.K, config.master_seed)
    mom = moments(config.channel, config.varrho,
                  _moments_rng(config.master_seed), config.moment_draws)

    cache = _DecoderCache(C, mom, config.channel.noise_var, config.cmud.nu)
    cmud_algs = [a for a in config.algorithms if a.startswith("cmud")]
    records = []
    for M in sorted(set(config.M_list)):
        if cmud_algs:
            design_M0 = _design_count(config, C, mom, M)
            decoders = {a: cache.get(a, design_M0) for a in cmud_algs}
        else:
            design_M0 = 1
            decoders = {}

        def worker(trial, M=M, design_M0=design_M0, decoders=decoders):
            return _run_point_trial(config, C, mom, decoders, design_M0, M,
                                    trial)

        records.extend(_map_trials(worker, config.trials, config.workers))

    records.sort(key=lambda r: (r.M, r.algorithm, r.trial))
    csv_text = records_to_csv(records, config.channel)
    summary = _summarize(records, config)
    result = SweepResult(records=records, summary=summary, csv_text=csv_text)
    if out_dir is not None:
        _write_outputs(out_dir, config,
                       {"records.csv": csv_text, "summary.json": summary})
    return result


# ---------------------------------------------------------------------------
# analytic-bound audit

def audit_lemma1(config: ExperimentConfig, out_dir=None) -> dict:
    """Audit the detection guarantee on simulated trials (see module
    docstring). Uses the first cmud algorithm named in the config (falling
    back to cmud-scaled) and a fixed design count per point."""
    validate_config(config)
    C = generate_code_matrix(config.L, config.K, config.master_seed)
    mom = moments(config.channel, config.varrho,
                  _moments_rng(config.master_seed), config.moment_draws)
    algorithm = next((a for a in config.algorithms if a.startswith("cmud")),
                     "cmud-scaled")
    cache = _DecoderCache(C, mom, config.channel.noise_var, config.cmud.nu)
    noise_var = config.channel.noise_var

    points = []
    for M in sorted(set(config.M_list)):
        M0 = (config.cmud.M0 if config.cmud.M0 is not None else max(M, 1))
        dec = cache.get(algorithm, M0)
        thresholds = thresholds_from_stats(
            (dec.coh_alpha, dec.coh_beta, dec.coh_gamma), mom, noise_var, M0,
            config.cmud.nu, config.K)
        entry = {
            "M": M, "M0": M0, "trials": config.trials,
            "decoder": algorithm,
            "tau": thresholds.tau, "coh_beta": thresholds.coh_beta,
            "Upsilon": thresholds.Upsilon,
            "kappa_window": list(thresholds.kappa_window),
            "feasible": thresholds.feasible,
        }
        if not thresholds.feasible:
            entry["reason"] = ("threshold window infeasible "
                               "(tau + M0 beta >= 1/2); bound is vacuous")
            points.append(entry)
            continue

        D = dec.entries
        sigma_count = 0
        out_violations = 0
        in_violations = 0
        errors = 0
        for trial in range(config.trials):
            S, y, draw, model = _draw_trial(C, config, M, trial)
            active = np.unique(S)
            m_true = active.size
            perturb = np.max(np.abs((D.T @ (draw.vartheta - model.u)).real))
            result = cmud_detect(C, D, y, thresholds,
                                 config.cmud.kappa_policy)
            if (set(result.detected.tolist()) != set(active.tolist())):
                errors += 1
            if perturb >= thresholds.tau:
                continue      # inequalities are asserted only on Sigma-trials
            sigma_count += 1
            corr = (D.T @ y).real
            mask = np.zeros(config.K, dtype=bool)
            mask[active] = True
            out_bound = m_true * thresholds.coh_beta + thresholds.tau
            in_bound = 1.0 - (m_true - 1) * thresholds.coh_beta - thresholds.tau
            if np.any(np.abs(corr[~mask]) > out_bound + 1e-12):
                out_violations += 1
            if m_true and np.any(corr[mask] < in_bound - 1e-12):
                in_violations += 1

        bound = detection_error_bound(config.K, config.cmud.nu)
        se = float(np.sqrt(bound * (1.0 - bound) / config.trials))
        p_e = errors / config.trials
        entry.update({
            "sigma_frequency": sigma_count / config.trials,
            "sigma_trials": sigma_count,
            "lemma_out_violations": out_violations,
            "lemma_in_violations": in_violations,
            "inequalities_hold": out_violations == 0 and in_violations == 0,
            "p_e": p_e,
            "bound": bound,
            "bound_plus_3se": bound + 3 * se,
            "p_e_within_bound": p_e <= bound + 3 * se,
        })
        points.append(entry)

    report = {
        "schema": "brmud-audit-v1",
        "config_sha256": config_sha256(config),
        "L": config.L, "K": config.K, "nu": config.cmud.nu,
        "points": points,
    }
    if out_dir is not None:
        _write_outputs(out_dir, config, {"audit.json": report})
    return report


# ---------------------------------------------------------------------------
# figure grids

def _figure_cells(config: ExperimentConfig, figure: str) -> tuple:
    """(algorithms, list of (K, channel)) for a figure id."""
    ch = config.channel
    cmud_pair = ("cmud-d1", "cmud-d2")
    relax_pair = ("lasso", "tls")
    if figure == "1":
        channel = replace(ch, sigma_e_sq=0.01 ** 2, sigma_eta_sq=0.01 ** 2,
                          noise_var=0.01 ** 2)
        return ("cmud-d1", "cmud-d2", "lasso", "tls"), [(config.K, channel)]
    if figure in ("2a", "2b"):
        base = replace(ch, sigma_e_sq=0.15 ** 2, sigma_eta_sq=0.15 ** 2)
        cells = [(config.K, replace(base, noise_var=s ** 2))
                 for s in (0.2, 0.5)]
        return (cmud_pair if figure == "2a" else relax_pair), cells
    if figure in ("3a", "3b"):
        cells = [(config.K, replace(ch, sigma_e_sq=s ** 2,
                                    sigma_eta_sq=s ** 2,
                                    noise_var=0.2 ** 2))
                 for s in (0.1, 0.15, 0.2)]
        return (cmud_pair if figure == "3a" else relax_pair), cells
    if figure in ("4a", "4b"):
        channel = replace(ch, sigma_e_sq=0.1 ** 2, sigma_eta_sq=0.1 ** 2,
                          noise_var=0.2 ** 2)
        cells = [(K, channel) for K in (200, 250, 300, 400)]
        return (("cmud-d1",) if figure == "4a" else ("tls",)), cells
    raise ValueError(f"unknown figure id {figure!r}; expected one of "
                     + ", ".join(FIGURE_IDS))


@dataclass
class FigureResult:
    rows: list
    csv_text: str


def emit_figure_data(config: ExperimentConfig, figure: str,
                     out_dir=None) -> FigureResult:
    """Run the sweep over a figure's parameter grid; plot-ready CSV rows."""
    algorithms, cells = _figure_cells(config, str(figure))
    rows = []
    for K, channel in cells:
        cell_config = replace(config, K=K, channel=channel,
                              algorithms=algorithms)
        result = run_sweep(cell_config)
        sigma_e, sigma_eta, sigma_theta = _sigma_columns(channel)
        for point in result.summary["points"]:
            rows.append({
                "figure": figure, "M": point["M"], "K": K,
                "sigma_e": sigma_e, "sigma_eta": sigma_eta,
                "sigma_theta": sigma_theta,
                "algorithm": point["algorithm"],
                "p_e": point["p_e"], "ci_low": point["ci_low"],
                "ci_high": point["ci_high"], "trials": point["trials"],
            })
    lines = [",".join(FIGURE_CSV_COLUMNS)]
    for row in rows:
        lines.append(",".join((
            str(row["figure"]), str(row["M"]), str(row["K"]),
            "%.6g" % row["sigma_e"], "%.6g" % row["sigma_eta"],
            "%.6g" % row["sigma_theta"], row["algorithm"],
            "%.6g" % row["p_e"], "%.6g" % row["ci_low"],
            "%.6g" % row["ci_high"], str(row["trials"]),
        )))
    csv_text = "\n".join(lines) + "\n"
    result = FigureResult(rows=rows, csv_text=csv_text)
    if out_dir is not None:
        _write_outputs(out_dir, config,
                       {f"figure_{figure}.csv": csv_text})
    return result
