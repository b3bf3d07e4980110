"""Command-line front end.

Every pipeline stage is a subcommand; figure subcommands emit
spreadsheet-ready CSV whose bytes are a pure function of (config, seed).
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from ..analysis import (
    LinkBudget,
    PathSpectrum,
    per_path_snr,
    reduced_key_rate,
    theoretical_bdr,
    theoretical_correlation,
)
from ..channel import RismAttacker, sample_channel
from ..detection import candidate_taps, separate_paths
from ..numerics import RandomSource
from ..probing import probe_pair, probe_series
from .config import ExperimentConfig, load_config
from .sweeps import (
    _detector_report,
    calibrate_alpha,
    load_calibration,
    run_fig2,
    run_fig3,
    run_fig4,
    run_fig5,
    run_keygen_demo,
)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--seed", type=int, help="override the experiment seed")
    p.add_argument("--out", help="output path (default under output_dir)")


def _build_config(args) -> ExperimentConfig:
    overrides = {}
    for item in args.overrides:
        if "=" not in item:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        key, val = item.split("=", 1)
        overrides[key.strip()] = val
    if args.seed is not None:
        overrides["seed"] = args.seed
    return load_config(args.config, overrides)


def _out_path(args, cfg: ExperimentConfig, default_name: str) -> Path:
    path = Path(args.out) if args.out else Path(cfg.output_dir) / default_name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rismlab",
                                description="OFDM key-generation attack lab")
    sub = p.add_subparsers(dest="cmd", required=True)

    for name, text in (
        ("fig2", "raw-estimate amplitude BDR sweep"),
        ("fig3", "per-path BDR sweep after separation"),
        ("fig4", "detection probability sweep"),
        ("fig5", "key-rate comparison sweep"),
    ):
        sp = sub.add_parser(name, help=text)
        _add_common(sp)
        if name in ("fig4", "fig5"):
            sp.add_argument("--calibration", help="existing calibration CSV to reuse")

    sp = sub.add_parser("calibrate", help="threshold calibration grid")
    _add_common(sp)

    sp = sub.add_parser("probe", help="one coherence-block probe pair")
    _add_common(sp)
    sp.add_argument("--snr-db", type=float, default=10.0)
    sp.add_argument("--gamma", type=float)

    sp = sub.add_parser("detect", help="detection report for one block")
    _add_common(sp)
    sp.add_argument("--snr-db", type=float, default=10.0)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--kappa", type=float,
                    help="threshold scale (calibrated on the fly when absent)")

    sp = sub.add_parser("keygen", help="one end-to-end key-generation batch")
    _add_common(sp)
    sp.add_argument("--snr-db", type=float, default=20.0)
    sp.add_argument("--gamma", type=float)

    sp = sub.add_parser("theory", help="evaluate a closed form from flags")
    sp.add_argument("--eq", required=True, choices=["9", "12", "23", "27"])
    sp.add_argument("--sigma-d", type=float, default=1.0)
    sp.add_argument("--xi", type=float, default=0.0)
    sp.add_argument("--sigma-n", type=float, default=0.0)
    sp.add_argument("--m-bits", type=int, default=1)
    sp.add_argument("--coefficient", choices=["amplitude", "gaussian"],
                    default="amplitude")
    sp.add_argument("--l", type=int, default=64)
    sp.add_argument("--lam", default="1.0",
                    help="path variance(s), comma separated for --eq 27")
    sp.add_argument("--path-index", type=int, default=0)
    return p


def _cmd_theory(args) -> int:
    if args.eq == "9":
        value = theoretical_correlation(LinkBudget(args.sigma_d, args.xi, args.sigma_n))
    elif args.eq == "12":
        value = theoretical_bdr(LinkBudget(args.sigma_d, args.xi, args.sigma_n),
                                args.m_bits, coefficient=args.coefficient)
    elif args.eq == "23":
        lams = tuple(float(tok) for tok in args.lam.split(","))
        value = per_path_snr(PathSpectrum(lams, args.l, args.sigma_n), args.path_index)
    else:
        lams = tuple(float(tok) for tok in args.lam.split(","))
        value = reduced_key_rate(PathSpectrum(lams, args.l, args.sigma_n),
                                 range(len(lams)))
    print(f"{value:.10g}")
    return 0


def _one_block(cfg, gamma, snr_db):
    rng = RandomSource(cfg.seed).substream("cli")
    attacker = RismAttacker(cfg.n_elements, gamma > 0,
                            rng.substream("attacker") if gamma > 0 else None)
    xi = cfg.cascade_variance(gamma) if gamma > 0 else 0.0
    noise = cfg.noise_variance(snr_db, gamma)
    ch = sample_channel(cfg.pdp(), attacker, xi, cfg.attack_tap(),
                        rng.substream("env"), cfg.n_subcarriers)
    return ch, attacker, noise, rng.substream("env2")


def _cmd_probe(args) -> int:
    cfg = _build_config(args)
    gamma = cfg.gamma if args.gamma is None else args.gamma
    ch, attacker, noise, rng = _one_block(cfg, gamma, args.snr_db)
    rec = probe_pair(ch, attacker, noise, rng)
    out = _out_path(args, cfg, "probe.csv")
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subcarrier", "alice_re", "alice_im", "bob_re", "bob_im"])
        for i in range(cfg.n_subcarriers):
            w.writerow([i, repr(rec.cfr_alice[i].real), repr(rec.cfr_alice[i].imag),
                        repr(rec.cfr_bob[i].real), repr(rec.cfr_bob[i].imag)])
    print(out)
    return 0


def _cmd_detect(args) -> int:
    cfg = _build_config(args)
    gamma = cfg.gamma if args.gamma is None else args.gamma
    if args.kappa is not None:
        kappa = args.kappa
    else:
        kappa = calibrate_alpha(cfg, q_values=(cfg.q_rounds,),
                                snr_values=(args.snr_db,)).kappa(cfg.q_rounds,
                                                                 args.snr_db)
    ch, attacker, noise, rng = _one_block(cfg, gamma, args.snr_db)
    series = probe_series(ch, attacker, noise, cfg.q_rounds, rng,
                          cfg.cadence_ms, cfg.coherence_ms)
    ts = separate_paths(series, "alice")
    cand = candidate_taps(ts, cfg.n_paths + 1)
    rep = _detector_report(ts, cand, kappa, cfg.detection_method)
    out = _out_path(args, cfg, "detect.csv")
    rep.write_csv(out)
    print(out)
    print(f"attacked_taps={list(rep.attacked_taps)} true_attack_tap={ch.attack_tap_index}")
    return 0


def _cmd_keygen(args) -> int:
    cfg = _build_config(args)
    gamma = cfg.gamma if args.gamma is None else args.gamma
    result = run_keygen_demo(cfg, args.snr_db, gamma)
    print(f"kgr_bits_per_block={result['kgr']:.4f}")
    print(f"theory_rate_bits={result['theory']:.4f}")
    print(f"reconciliation_failures={int(result['fail'])}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.cmd == "theory":
            return _cmd_theory(args)
        if args.cmd == "probe":
            return _cmd_probe(args)
        if args.cmd == "detect":
            return _cmd_detect(args)
        if args.cmd == "keygen":
            return _cmd_keygen(args)

        cfg = _build_config(args)
        if args.cmd == "calibrate":
            table = calibrate_alpha(cfg)
            out = _out_path(args, cfg, "calibration.csv")
            table.write_csv(out)
            print(out)
            return 0
        calibration = None
        if getattr(args, "calibration", None):
            calibration = load_calibration(args.calibration)
        runner = {"fig2": run_fig2, "fig3": run_fig3}.get(args.cmd)
        if runner is not None:
            result = runner(cfg)
        elif args.cmd == "fig4":
            result = run_fig4(cfg, calibration)
        elif args.cmd == "fig5":
            result = run_fig5(cfg, calibration)
        else:  # pragma: no cover
            raise ValueError(f"unhandled command {args.cmd}")
        out = _out_path(args, cfg, f"{args.cmd}.csv")
        result.write_csv(out)
        print(out)
        return 0
    except (ValueError, OSError, KeyError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
