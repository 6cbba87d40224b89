"""Command-line interface.

Subcommands: codes, lambda-stats, design-decoder, detect, sweep, figure,
audit. Experiment settings come from a flat key=value config file (--config);
--master-seed overrides the config's seed. The heavy runners (sweep, figure,
audit) write their outputs plus a manifest.json (config hash, versions) into
--out-dir. Detected code indices are 0-based everywhere.

File formats:
  codes          header "L K", then L rows of K entries "+1"/"-1"
  decoder text   header "L K", then L rows of K floats; JSON sidecar carries
                 provenance, coherence stats, and design inputs
  signal         L lines "re im" (whitespace-separated floats)
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .channel import ChannelParams
from .codes import generate_code_matrix, load_code_matrix, save_code_matrix
from .decoders import (DecoderMatrix, design_decoder_mmse,
                       design_decoder_optimal, mmse_delta,
                       scaled_code_decoder)
from .greedy import (compute_thresholds, cmud_detect, estimate_user_count,
                     thresholds_from_stats)
from .harness import (ExperimentConfig, _moments_rng, _resolve_xi,
                      audit_lemma1, emit_figure_data, parse_config_text,
                      run_sweep, validate_config)
from .mismatch import moments
from .sparse import (LASSO_NOISELESS_XI, TlsConfig, lasso_detect,
                     lp_tls_detect)
from .validation import ensure_received


def _json_default(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)!r}")


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, default=_json_default) + "\n"


def _load_config(args) -> ExperimentConfig:
    if args.config is None:
        config = ExperimentConfig()
    else:
        config = parse_config_text(Path(args.config).read_text())
    if getattr(args, "master_seed", None) is not None:
        config = dataclasses.replace(config, master_seed=args.master_seed)
    validate_config(config)
    return config


def _load_signal(path, L: int) -> np.ndarray:
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(
                f"signal line {lineno}: expected 're im', got {raw!r}")
        try:
            rows.append(complex(float(parts[0]), float(parts[1])))
        except ValueError:
            raise ValueError(
                f"signal line {lineno}: bad float in {raw!r}") from None
    return ensure_received(np.array(rows), L)


def _save_decoder(dec: DecoderMatrix, path) -> None:
    L, K = dec.entries.shape
    lines = [f"{L} {K}"]
    for row in dec.entries:
        lines.append(" ".join("%.17g" % v for v in row))
    Path(path).write_text("\n".join(lines) + "\n")
    sidecar = {
        "provenance": dec.provenance,
        "design_inputs": dec.design_inputs,
        "coh_alpha": dec.coh_alpha,
        "coh_beta": dec.coh_beta,
        "coh_gamma": dec.coh_gamma,
        "objective": dec.objective,
        "converged": dec.converged,
    }
    Path(path).with_suffix(".json").write_text(_dump_json(sidecar))


def _load_decoder(path) -> np.ndarray:
    lines = [l for l in Path(path).read_text().splitlines() if l.strip()]
    try:
        L, K = (int(tok) for tok in lines[0].split())
    except (ValueError, IndexError):
        raise ValueError(f"decoder file {path}: bad header") from None
    if len(lines) - 1 != L:
        raise ValueError(f"decoder file {path}: expected {L} rows, "
                         f"got {len(lines) - 1}")
    D = np.array([[float(tok) for tok in line.split()] for line in lines[1:]])
    if D.shape != (L, K):
        raise ValueError(f"decoder file {path}: ragged rows")
    return D


# ---------------------------------------------------------------------------
# subcommands

def _cmd_codes(args) -> int:
    C = generate_code_matrix(args.L, args.K, args.seed)
    save_code_matrix(C, args.out)
    print(f"wrote {args.L}x{args.K} code matrix to {args.out}")
    return 0


def _cmd_lambda_stats(args) -> int:
    config = _load_config(args)
    mom = moments(config.channel, config.varrho,
                  _moments_rng(config.master_seed), config.moment_draws)
    payload = dataclasses.asdict(mom)
    payload["rho"] = [mom.rho.real, mom.rho.imag]
    text = _dump_json(payload)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote mismatch moments to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_design_decoder(args) -> int:
    config = _load_config(args)
    if args.codes:
        C = load_code_matrix(args.codes)
    else:
        C = generate_code_matrix(config.L, config.K, config.master_seed)
    L, K = C.shape
    if args.method == "scaled":
        dec = scaled_code_decoder(C)
    else:
        if args.M0 is None:
            raise ValueError("--M0 is required for designed decoders")
        mom = moments(config.channel, config.varrho,
                      _moments_rng(config.master_seed), config.moment_draws)
        eps = args.M0 / K
        if args.method == "mmse":
            delta = mmse_delta(eps, mom.mu_r, mom.m2_r)
            dec = design_decoder_mmse(C, delta, config.channel.noise_var)
        else:
            Upsilon = float(
                np.sqrt(2.0 * (1.0 + config.cmud.nu) * np.log(K))
                * np.sqrt(args.M0 * mom.sigma_r_sq
                          + config.channel.noise_var / 2.0))
            dec = design_decoder_optimal(C, eps, mom.mu_r, args.M0, Upsilon)
    _save_decoder(dec, args.out)
    print(f"wrote {dec.provenance} decoder to {args.out} "
          f"(coherence alpha={dec.coh_alpha:.4g} beta={dec.coh_beta:.4g} "
          f"gamma={dec.coh_gamma:.4g})")
    return 0


def _cmd_detect(args) -> int:
    config = _load_config(args)
    if args.codes:
        C = load_code_matrix(args.codes)
    else:
        C = generate_code_matrix(config.L, config.K, config.master_seed)
    L, K = C.shape
    y = _load_signal(args.signal, L)
    mom = moments(config.channel, config.varrho,
                  _moments_rng(config.master_seed), config.moment_draws)
    noise_var = config.channel.noise_var
    out = {"algorithm": args.algo}

    if args.algo.startswith("cmud"):
        if args.decoder_file:
            D = _load_decoder(args.decoder_file)
        elif args.algo == "cmud-scaled":
            D = scaled_code_decoder(C).entries
        else:
            raise ValueError(
                f"{args.algo} needs --decoder-file (design one with "
                "the design-decoder subcommand)")
        M0 = args.M0
        if M0 is None:
            M0 = max(estimate_user_count(y, mom, noise_var, L, K), 1)
        thresholds = compute_thresholds(D, C, mom, noise_var, M0,
                                        config.cmud.nu, K)
        result = cmud_detect(C, D, y, thresholds, config.cmud.kappa_policy)
        out.update(detected=result.detected.tolist(), M0=M0,
                   iterations=result.iterations,
                   terminated_by=result.terminated_by,
                   guaranteed=result.guaranteed)
    elif args.algo == "tls":
        M_hat = args.M0 or max(estimate_user_count(y, mom, noise_var, L, K), 1)
        xi = _resolve_xi(config.tls.xi, config, mom, M_hat)
        cfg = TlsConfig(p=config.tls.p, xi=xi,
                        max_outer=config.tls.max_outer,
                        max_inner=config.tls.max_inner,
                        max_dual_steps=config.tls.max_dual_steps,
                        stop_tol=config.tls.stop_tol,
                        weight_eps=config.tls.weight_eps,
                        dual_step0=config.tls.dual_step0)
        support, _, trace = lp_tls_detect(C, y, cfg)
        out.update(detected=support.tolist(), xi=xi,
                   converged=trace.converged,
                   outer_iterations=trace.outer_iterations)
    elif args.algo == "lasso":
        M_hat = args.M0 or max(estimate_user_count(y, mom, noise_var, L, K), 1)
        xi = _resolve_xi(config.lasso.xi, config, mom, M_hat,
                         flat=LASSO_NOISELESS_XI)
        support, _ = lasso_detect(C, y, xi)
        out.update(detected=support.tolist(), xi=xi)
    else:
        raise ValueError(f"unknown algorithm {args.algo!r}")

    sys.stdout.write(_dump_json(out))
    return 0


def _cmd_sweep(args) -> int:
    config = _load_config(args)
    result = run_sweep(config, out_dir=args.out_dir)
    for point in result.summary["points"]:
        print(f"M={point['M']} K={point['K']} {point['algorithm']}: "
              f"P_e={point['p_e']:.4g} "
              f"[{point['ci_low']:.4g}, {point['ci_high']:.4g}] "
              f"({point['trials']} trials)")
    print(f"wrote records.csv, summary.json, manifest.json to {args.out_dir}")
    return 0


def _cmd_figure(args) -> int:
    config = _load_config(args)
    result = emit_figure_data(config, args.figure, out_dir=args.out_dir)
    print(f"wrote figure_{args.figure}.csv ({len(result.rows)} points) "
          f"to {args.out_dir}")
    return 0


def _cmd_audit(args) -> int:
    config = _load_config(args)
    report = audit_lemma1(config, out_dir=args.out_dir)
    for point in report["points"]:
        if not point["feasible"]:
            print(f"M={point['M']} M0={point['M0']}: infeasible window, "
                  "bound vacuous")
            continue
        print(f"M={point['M']} M0={point['M0']}: "
              f"sigma_freq={point['sigma_frequency']:.4g} "
              f"inequalities_hold={point['inequalities_hold']} "
              f"P_e={point['p_e']:.4g} <= bound+3se="
              f"{point['bound_plus_3se']:.4g}: {point['p_e_within_bound']}")
    print(f"wrote audit.json, manifest.json to {args.out_dir}")
    return 0


def _add_config_flags(sub, seed=True):
    sub.add_argument("--config", help="flat key=value config file")
    if seed:
        sub.add_argument("--master-seed", type=int, default=None,
                         help="override the config's master seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="brmud",
        description="Multiuser detection simulation laboratory")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("codes", help="generate and save a code matrix")
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_codes)

    p = subs.add_parser("lambda-stats",
                        help="mismatch moments for the config's channel")
    _add_config_flags(p)
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=_cmd_lambda_stats)

    p = subs.add_parser("design-decoder", help="design and save a decoder")
    _add_config_flags(p)
    p.add_argument("--method", choices=("scaled", "mmse", "optimal"),
                   required=True)
    p.add_argument("--M0", type=int,
                   help="design user count (mmse/optimal)")
    p.add_argument("--codes", help="code matrix file (default: generate "
                                   "from config L, K, master seed)")
    p.add_argument("--out", required=True, help="decoder text file; a .json "
                                                "sidecar is written next to it")
    p.set_defaults(func=_cmd_design_decoder)

    p = subs.add_parser("detect", help="detect active codes in one signal")
    _add_config_flags(p)
    p.add_argument("--algo", required=True,
                   choices=("cmud-scaled", "cmud-d1", "cmud-d2", "lasso",
                            "tls"))
    p.add_argument("--signal", required=True, help="file with L lines 're im'")
    p.add_argument("--codes", help="code matrix file (default: generate)")
    p.add_argument("--decoder-file", help="decoder text file for cmud-d1/d2")
    p.add_argument("--M0", type=int,
                   help="user count overestimate (default: estimated)")
    p.set_defaults(func=_cmd_detect)

    p = subs.add_parser("sweep", help="run the Monte Carlo sweep")
    _add_config_flags(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_sweep)

    p = subs.add_parser("figure", help="emit plot-ready data for a figure id")
    _add_config_flags(p)
    p.add_argument("--figure", required=True,
                   choices=("1", "2a", "2b", "3a", "3b", "4a", "4b"))
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_figure)

    p = subs.add_parser("audit", help="audit the detection guarantee")
    _add_config_flags(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_audit)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
