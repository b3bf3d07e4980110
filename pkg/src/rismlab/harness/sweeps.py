"""Experiment sweeps behind the stock figures, plus threshold calibration.

Every sweep is a pure function of (config, seed). Work is split into fixed
chunks keyed by (figure, point, chunk index); chunk random streams are
derived from those keys, and reduction happens in chunk order, so serial and
parallel runs emit byte-identical CSVs. The worker count comes from the
RISMLAB_WORKERS environment variable.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..analysis import LinkBudget, theoretical_bdr
from ..channel import RismAttacker, sample_channel
from ..detection import (
    candidate_taps,
    detect,
    detect_variance_variant,
    reconstruct_reciprocal,
    separate_paths,
)
from ..keygen import (
    LdpcCode,
    build_ldpc,
    capability_for,
    cdf_quantize,
    default_code,
    kgr_accounting,
    plan_quantization,
    reconcile,
)
from ..numerics import RandomSource, idft
from ..probing import probe_pair, probe_series
from .config import ExperimentConfig, config_hash

__all__ = [
    "SweepRow",
    "SweepResult",
    "CalibrationTable",
    "calibrate_alpha",
    "run_fig2",
    "run_fig3",
    "run_fig4",
    "run_fig5",
    "run_keygen_demo",
]

N_CHUNKS = 8


# ------------------------------------------------------------------ results

@dataclass(frozen=True)
class SweepRow:
    axis: float
    metric: str
    mean: float
    stderr: float
    trials: int


@dataclass
class SweepResult:
    rows: list
    seed: int
    config_hash: str

    def sorted_rows(self):
        return sorted(self.rows, key=lambda r: (r.axis, r.metric))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["axis", "metric", "mean", "stderr", "trials", "seed", "config_hash"])
        for r in self.sorted_rows():
            w.writerow([repr(float(r.axis)), r.metric, repr(float(r.mean)),
                        repr(float(r.stderr)), r.trials, self.seed, self.config_hash])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    def value(self, axis: float, metric: str) -> float:
        for r in self.rows:
            if r.metric == metric and math.isclose(r.axis, axis):
                return r.mean
        raise KeyError(f"no row for axis={axis}, metric={metric}")

    def stderr_of(self, axis: float, metric: str) -> float:
        for r in self.rows:
            if r.metric == metric and math.isclose(r.axis, axis):
                return r.stderr
        raise KeyError(f"no row for axis={axis}, metric={metric}")


@dataclass(frozen=True)
class CalibrationTable:
    """Threshold scale kappa per (Q, SNR) point, from no-attack trials."""

    entries: tuple  # of (q, snr_db, kappa)
    fa_target: float
    method: str

    def kappa(self, q: int, snr_db: float) -> float:
        for eq, es, k in self.entries:
            if eq == q and math.isclose(es, snr_db):
                return k
        raise KeyError(f"no calibration entry for Q={q}, snr={snr_db} dB")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["q", "snr_db", "kappa", "fa_target", "method"])
        for q, s, k in sorted(self.entries):
            w.writerow([q, repr(float(s)), repr(float(k)), repr(self.fa_target),
                        self.method])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def load_calibration(path) -> CalibrationTable:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        entries = []
        fa = 0.0
        method = "variance"
        for row in reader:
            entries.append((int(row["q"]), float(row["snr_db"]), float(row["kappa"])))
            fa = float(row["fa_target"])
            method = row["method"]
    return CalibrationTable(tuple(entries), fa, method)


# ------------------------------------------------------- deterministic chunks

def _n_workers() -> int:
    try:
        return max(1, int(os.environ.get("RISMLAB_WORKERS", "1")))
    except ValueError:
        return 1


def _map_jobs(jobs):
    workers = _n_workers()
    if workers <= 1 or len(jobs) <= 1:
        return [_run_chunk(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_run_chunk, jobs, chunksize=1))


def _chunk_sizes(total: int, n_chunks: int = N_CHUNKS):
    n_chunks = min(n_chunks, total)
    base, extra = divmod(total, n_chunks)
    return [base + (1 if i < extra else 0) for i in range(n_chunks)]


def _chunk_rngs(cfg: ExperimentConfig, point_key: str, chunk_index: int):
    base = RandomSource(cfg.seed).substream(point_key).substream(f"chunk-{chunk_index}")
    return base.substream("env"), base.substream("attacker")


def _moments(values) -> dict:
    arr = np.asarray(values, dtype=float)
    return {"sum": float(arr.sum()), "sumsq": float(np.dot(arr, arr)), "n": int(arr.size)}


def _reduce_moments(parts):
    s = sum(p["sum"] for p in parts)
    s2 = sum(p["sumsq"] for p in parts)
    n = sum(p["n"] for p in parts)
    mean = s / n
    if n > 1:
        var = max(0.0, (s2 - n * mean * mean) / (n - 1))
        stderr = math.sqrt(var / n)
    else:
        stderr = 0.0
    return mean, stderr, n


def _attacker(cfg: ExperimentConfig, gamma: float, att_rng: RandomSource) -> RismAttacker:
    enabled = gamma > 0
    return RismAttacker(cfg.n_elements, enabled, att_rng if enabled else None)


def _detector_report(ts, candidates, kappa: float, method: str):
    cand = list(candidates)
    if method == "variance":
        base = float(ts.round_variance()[cand].mean())
        return detect_variance_variant(ts, cand, kappa * base)
    if method == "mean_power":
        base = float(ts.mean_power()[cand].mean())
        return detect(ts, cand, kappa * base)
    raise ValueError(f"unknown detection method: {method!r}")


def _detection_base_max(ts, candidates, method: str) -> float:
    """Largest normalized statistic over the candidates (calibration unit)."""
    cand = list(candidates)
    if method == "variance":
        x = ts.round_variance()[cand]
    elif method == "mean_power":
        x = ts.mean_power()[cand]
    else:
        raise ValueError(f"unknown detection method: {method!r}")
    base = x.mean()
    return float((x - base).max() / base)


# ------------------------------------------------------------------- chunks

def _run_chunk(job):
    kind = job[0]
    if kind == "fig2":
        return _fig2_chunk(*job[1:])
    if kind == "fig3":
        return _fig3_chunk(*job[1:])
    if kind == "fig4":
        return _fig4_chunk(*job[1:])
    if kind == "fig5":
        return _fig5_batch(*job[1:])
    if kind == "calib":
        return _calib_chunk(*job[1:])
    raise ValueError(f"unknown chunk kind {kind!r}")


def _fig2_chunk(cfg: ExperimentConfig, gamma, snr_db, point_key, ci, n_blocks):
    rng, att_rng = _chunk_rngs(cfg, point_key, ci)
    pdp = cfg.pdp()
    xi = cfg.cascade_variance(gamma)
    noise = cfg.noise_variance(snr_db, gamma)
    attacker = _attacker(cfg, gamma, att_rng)
    attack_tap = cfg.attack_tap()
    bdrs = np.empty(n_blocks)
    for b in range(n_blocks):
        ch = sample_channel(pdp, attacker, xi, attack_tap, rng, cfg.n_subcarriers)
        rec = probe_pair(ch, attacker, noise, rng)
        bits_a = cdf_quantize(np.abs(rec.cfr_alice), 1, "empirical")
        bits_b = cdf_quantize(np.abs(rec.cfr_bob), 1, "empirical")
        bdrs[b] = np.mean(bits_a != bits_b)
    return {"bdr": _moments(bdrs)}


def _fig3_chunk(cfg: ExperimentConfig, gamma, snr_db, point_key, ci, n_blocks):
    rng, att_rng = _chunk_rngs(cfg, point_key, ci)
    pdp = cfg.pdp()
    xi = cfg.cascade_variance(gamma)
    noise = cfg.noise_variance(snr_db, gamma)
    attacker = _attacker(cfg, gamma, att_rng)
    attack_tap = cfg.attack_tap()
    watch = list(pdp.tap_delays) + [attack_tap]
    coef_a = np.empty((n_blocks, len(watch)), dtype=complex)
    coef_b = np.empty_like(coef_a)
    for b in range(n_blocks):
        ch = sample_channel(pdp, attacker, xi, attack_tap, rng, cfg.n_subcarriers)
        rec = probe_pair(ch, attacker, noise, rng)
        coef_a[b] = idft(rec.cfr_alice)[watch]
        coef_b[b] = idft(rec.cfr_bob)[watch]
    return {"a": coef_a, "b": coef_b}


def _fig4_chunk(cfg: ExperimentConfig, gamma, snr_db, q, kappa, point_key, ci, n_trials):
    rng, att_rng = _chunk_rngs(cfg, point_key, ci)
    pdp = cfg.pdp()
    xi = cfg.cascade_variance(gamma) if gamma > 0 else 0.0
    noise = cfg.noise_variance(snr_db, gamma)
    attacker = _attacker(cfg, gamma, att_rng)
    attack_tap = cfg.attack_tap()
    hits = np.empty(n_trials)
    flags = np.empty(n_trials)
    for t in range(n_trials):
        ch = sample_channel(pdp, attacker, xi, attack_tap, rng, cfg.n_subcarriers)
        series = probe_series(ch, attacker, noise, q, rng,
                              cfg.cadence_ms, cfg.coherence_ms)
        ts = separate_paths(series, "alice")
        cand = candidate_taps(ts, cfg.n_paths + 1)
        rep = _detector_report(ts, cand, kappa, cfg.detection_method)
        hits[t] = float(rep.attacked_taps == (attack_tap,))
        flags[t] = float(len(rep.attacked_taps) > 0)
    return {"exact": _moments(hits), "flagged": _moments(flags)}


def _calib_chunk(cfg: ExperimentConfig, snr_db, q, point_key, ci, n_trials):
    rng, _ = _chunk_rngs(cfg, point_key, ci)
    pdp = cfg.pdp()
    noise = cfg.total_direct_power / 10.0 ** (snr_db / 10.0)
    attacker = RismAttacker(cfg.n_elements, False, None)
    attack_tap = cfg.attack_tap()
    ts_max = np.empty(n_trials)
    for t in range(n_trials):
        ch = sample_channel(pdp, attacker, 0.0, attack_tap, rng, cfg.n_subcarriers)
        series = probe_series(ch, attacker, noise, q, rng,
                              cfg.cadence_ms, cfg.coherence_ms)
        ts = separate_paths(series, "alice")
        cand = candidate_taps(ts, cfg.n_paths + 1)
        ts_max[t] = _detection_base_max(ts, cand, cfg.detection_method)
    return ts_max


# ------------------------------------------------------------- calibration

def calibrate_alpha(cfg: ExperimentConfig, q_values=None, snr_values=None) -> CalibrationTable:
    """Per (Q, SNR): the smallest kappa holding false alarm at or below target.

    kappa scales the candidate-average of the detection statistic's base
    quantity; a trial false-alarms when any no-attack candidate statistic
    reaches kappa times that average. The returned kappa is the midpoint of
    the empirical quantile gap, so recalibration with the same seed is
    bit-stable.
    """
    qs = tuple(q_values) if q_values is not None else tuple(cfg.q_list)
    snrs = tuple(snr_values) if snr_values is not None else tuple(cfg.detect_snr_db_list)
    entries = []
    for q in qs:
        for snr in snrs:
            key = f"calib/q={q}/snr={snr:g}"
            jobs = [("calib", cfg, snr, q, key, ci, n)
                    for ci, n in enumerate(_chunk_sizes(cfg.calibration_trials))]
            ts = np.sort(np.concatenate(_map_jobs(jobs)))
            allowed = int(math.floor(cfg.fa_target * ts.size))
            if allowed == 0:
                kappa = float(ts[-1]) * (1.0 + 1e-9) + 1e-12
            else:
                kappa = 0.5 * float(ts[ts.size - allowed - 1] + ts[ts.size - allowed])
            entries.append((int(q), float(snr), kappa))
    return CalibrationTable(tuple(entries), cfg.fa_target, cfg.detection_method)


# ------------------------------------------------------------------ figures

def run_fig2(cfg: ExperimentConfig) -> SweepResult:
    """Raw-estimate amplitude BDR versus SNR for each attack strength."""
    rows = []
    for gamma in cfg.gamma_list:
        xi = cfg.cascade_variance(gamma)
        for snr in cfg.snr_db_list:
            key = f"fig2/gamma={gamma:g}/snr={snr:g}"
            jobs = [("fig2", cfg, gamma, snr, key, ci, n)
                    for ci, n in enumerate(_chunk_sizes(cfg.fig2_blocks))]
            parts = _map_jobs(jobs)
            mean, stderr, n = _reduce_moments([p["bdr"] for p in parts])
            rows.append(SweepRow(snr, f"bdr@gamma={gamma:g}", mean, stderr, n))
            budget = LinkBudget(cfg.total_direct_power, xi, cfg.noise_variance(snr, gamma))
            rows.append(SweepRow(snr, f"bdr_theory@gamma={gamma:g}",
                                 theoretical_bdr(budget, 1), 0.0, 1))
    return SweepResult(rows, cfg.seed, config_hash(cfg))


def run_fig3(cfg: ExperimentConfig) -> SweepResult:
    """Per-path BDR after separation: the attacked tap versus legitimate taps.

    Quantization batches pool the whole point so the empirical-CDF cells are
    tight; the disagreement is still averaged (and its spread taken) per
    block.
    """
    rows = []
    pdp = cfg.pdp()
    watch = list(pdp.tap_delays) + [cfg.attack_tap()]
    gammas = [g for g in cfg.gamma_list if g > 0]
    for gamma in gammas:
        for snr in cfg.snr_db_list:
            key = f"fig3/gamma={gamma:g}/snr={snr:g}"
            jobs = [("fig3", cfg, gamma, snr, key, ci, n)
                    for ci, n in enumerate(_chunk_sizes(cfg.fig3_blocks))]
            parts = _map_jobs(jobs)
            coef_a = np.concatenate([p["a"] for p in parts])
            coef_b = np.concatenate([p["b"] for p in parts])
            for j, tap in enumerate(watch):
                diff = np.zeros(coef_a.shape[0])
                for part in (np.real, np.imag):
                    ba = cdf_quantize(part(coef_a[:, j]), 1, "empirical")
                    bb = cdf_quantize(part(coef_b[:, j]), 1, "empirical")
                    diff += (ba != bb).astype(float)
                label = "attacked" if j == len(watch) - 1 else f"tap{tap}"
                mean, stderr, n = _reduce_moments([_moments(diff / 2.0)])
                rows.append(SweepRow(snr, f"bdr_{label}@gamma={gamma:g}", mean, stderr, n))
            noise_tap = cfg.noise_variance(snr, gamma) / cfg.n_subcarriers
            for delay, lam in zip(pdp.tap_delays, pdp.tap_variances):
                budget = LinkBudget(lam, 0.0, noise_tap)
                rows.append(SweepRow(
                    snr, f"bdr_theory_tap{delay}@gamma={gamma:g}",
                    theoretical_bdr(budget, 1, coefficient="gaussian"), 0.0, 1))
    return SweepResult(rows, cfg.seed, config_hash(cfg))


def run_fig4(cfg: ExperimentConfig, calibration: CalibrationTable | None = None) -> SweepResult:
    """Exact-detection probability versus SNR, probing rounds, and attack strength.

    Controls with the attacker off report the false-alarm rate at the same
    calibrated thresholds.
    """
    table = calibration if calibration is not None else calibrate_alpha(cfg)
    rows = []
    gammas = [g for g in cfg.gamma_list if g > 0]
    for q in cfg.q_list:
        for snr in cfg.detect_snr_db_list:
            kappa = table.kappa(q, snr)
            for gamma in gammas:
                key = f"fig4/gamma={gamma:g}/q={q}/snr={snr:g}"
                jobs = [("fig4", cfg, gamma, snr, q, kappa, key, ci, n)
                        for ci, n in enumerate(_chunk_sizes(cfg.fig4_trials))]
                parts = _map_jobs(jobs)
                mean, stderr, n = _reduce_moments([p["exact"] for p in parts])
                rows.append(SweepRow(snr, f"detect@gamma={gamma:g};q={q}", mean, stderr, n))
            key = f"fig4/control/q={q}/snr={snr:g}"
            jobs = [("fig4", cfg, 0.0, snr, q, kappa, key, ci, n)
                    for ci, n in enumerate(_chunk_sizes(cfg.fig4_trials))]
            parts = _map_jobs(jobs)
            mean, stderr, n = _reduce_moments([p["flagged"] for p in parts])
            rows.append(SweepRow(snr, f"false_alarm@q={q}", mean, stderr, n))
    return SweepResult(rows, cfg.seed, config_hash(cfg))


# ------------------------------------------------------------ fig5 pipeline

def _code_for(cfg: ExperimentConfig) -> LdpcCode:
    if cfg.ldpc_n == 128:
        return default_code()
    return build_ldpc(cfg.ldpc_n, rng=RandomSource(7).substream(f"ldpc-{cfg.ldpc_n}"))


def _fig5_batch(cfg: ExperimentConfig, scenario, snr_db, kappa, point_key, bi, n_blocks):
    mode, bandwidth, gamma = scenario
    rng, att_rng = _chunk_rngs(cfg, point_key, bi)
    pdp = cfg.pdp(bandwidth)
    xi = cfg.cascade_variance(gamma) if gamma > 0 else 0.0
    # matched noise floor across scenarios: the sweep axis is the SNR of the
    # legitimate signal, so attacked and clean runs stay comparable
    noise = cfg.total_direct_power / 10.0 ** (snr_db / 10.0)
    attacker = _attacker(cfg, gamma, att_rng)
    attack_tap = cfg.attack_tap(bandwidth)
    L = cfg.n_subcarriers
    code = _code_for(cfg)

    if mode == "cfr":
        # traditional single-round estimation, one-bit amplitude cells per block
        bits_a, bits_b = [], []
        for _ in range(n_blocks):
            ch = sample_channel(pdp, attacker, xi, attack_tap, rng, L)
            rec = probe_pair(ch, attacker, noise, rng)
            bits_a.append(cdf_quantize(np.abs(rec.cfr_alice), 1, "empirical"))
            bits_b.append(cdf_quantize(np.abs(rec.cfr_bob), 1, "empirical"))
        stream_a = np.concatenate(bits_a)
        stream_b = np.concatenate(bits_b)
        usable = (stream_a.size // code.n) * code.n
        outcome = reconcile(stream_a[:usable], stream_b[:usable], code)
        kgr = kgr_accounting(None, [outcome], n_blocks)
        return {"kgr": kgr, "theory": 0.0, "fail": 0.0 if outcome.agreed else 1.0}

    # path mode: probe Q rounds, separate, detect, keep, quantize per path
    cand_count = cfg.n_paths + 1
    kept_count: dict[int, int] = {}
    streams_a: dict[int, list] = {}
    streams_b: dict[int, list] = {}
    for _ in range(n_blocks):
        ch = sample_channel(pdp, attacker, xi, attack_tap, rng, L)
        series = probe_series(ch, attacker, noise, cfg.q_rounds, rng,
                              cfg.cadence_ms, cfg.coherence_ms)
        ts_a = separate_paths(series, "alice")
        ts_b = separate_paths(series, "bob")
        cand = candidate_taps(ts_a, cand_count)
        rep = _detector_report(ts_a, cand, kappa, cfg.detection_method)
        va, vb = reconstruct_reciprocal(ts_a, ts_b, rep)
        for tap, ca, cb in zip(rep.kept_taps, va, vb):
            kept_count[tap] = kept_count.get(tap, 0) + 1
            streams_a.setdefault(tap, []).append(ca)
            streams_b.setdefault(tap, []).append(cb)

    taps = sorted(t for t, c in kept_count.items() if c == n_blocks)
    tap_noise = noise / (L * cfg.q_rounds)  # residual per averaged coefficient
    lam_hat, snrs = [], []
    for tap in taps:
        power = float(np.mean(np.abs(streams_a[tap]) ** 2))
        lam = max(0.0, power - tap_noise)
        lam_hat.append(lam)
        snrs.append(lam / tap_noise if tap_noise > 0 else math.inf)
    plan = plan_quantization(snrs, cfg.target_ker, cfg.max_bits,
                             capability_for(code))

    parts_a, parts_b = [], []
    for tap, m in zip(taps, plan.per_path_bits):
        if m == 0:
            continue
        ca = np.asarray(streams_a[tap])
        cb = np.asarray(streams_b[tap])
        parts_a.append(np.concatenate([cdf_quantize(np.real(ca), m),
                                       cdf_quantize(np.imag(ca), m)]))
        parts_b.append(np.concatenate([cdf_quantize(np.real(cb), m),
                                       cdf_quantize(np.imag(cb), m)]))
    outcomes = []
    fails = 0
    if parts_a:
        # pooled reconciliation across paths; the tail short of one block is
        # simply not counted as key material
        stream_a = np.concatenate(parts_a)
        stream_b = np.concatenate(parts_b)
        usable = (stream_a.size // code.n) * code.n
        if usable:
            outcome = reconcile(stream_a[:usable], stream_b[:usable], code)
            outcomes.append(outcome)
            fails += 0 if outcome.agreed else 1
    kgr = kgr_accounting(None, outcomes, n_blocks) if outcomes else 0.0

    theory = 0.0
    for lam in lam_hat:
        s = L * lam / noise  # single-probe path SNR convention
        if s > 0:
            r = s / (1.0 + s)
            theory += math.log2(1.0 / (1.0 - r * r))
    return {"kgr": kgr, "theory": theory, "fail": float(fails)}


def _fig5_scenarios(cfg: ExperimentConfig):
    ref = cfg.reference_bandwidth_mhz
    scen = [(f"cfr_attack;bw={ref:g}", ("cfr", ref, cfg.gamma))]
    for bw in cfg.bandwidth_list:
        scen.append((f"proposed;bw={bw:g}", ("path", bw, cfg.gamma)))
        scen.append((f"noattack;bw={bw:g}", ("path", bw, 0.0)))
    return scen


def run_fig5(cfg: ExperimentConfig, calibration: CalibrationTable | None = None) -> SweepResult:
    """Key rate of the raw-estimate baseline versus the path-separation method.

    One channel use is one coherence block; the CSV also reports the
    information-theoretic rate of the kept paths (from their estimated
    variances) and the per-batch reconciliation failure count, so the rate
    deficit of a discarded path can be compared against its closed form.
    """
    table = calibration if calibration is not None else calibrate_alpha(
        cfg, q_values=(cfg.q_rounds,), snr_values=cfg.snr_db_list)
    capability_for(_code_for(cfg))  # warm caches before any worker forks
    rows = []
    for label, scenario in _fig5_scenarios(cfg):
        for snr in cfg.snr_db_list:
            kappa = table.kappa(cfg.q_rounds, snr)
            key = f"fig5/{label}/snr={snr:g}"
            jobs = [("fig5", cfg, scenario, snr, kappa, key, bi, cfg.batch_blocks)
                    for bi in range(cfg.fig5_batches)]
            parts = _map_jobs(jobs)
            for metric in ("kgr", "theory", "fail"):
                mean, stderr, n = _reduce_moments(
                    [_moments([p[metric]]) for p in parts])
                rows.append(SweepRow(snr, f"{metric}@{label}", mean, stderr, n))
    return SweepResult(rows, cfg.seed, config_hash(cfg))


def run_keygen_demo(cfg: ExperimentConfig, snr_db: float, gamma: float | None = None) -> dict:
    """One end-to-end batch at the given operating point (CLI helper)."""
    g = cfg.gamma if gamma is None else gamma
    table = calibrate_alpha(cfg, q_values=(cfg.q_rounds,), snr_values=(snr_db,))
    kappa = table.kappa(cfg.q_rounds, snr_db)
    scenario = ("path", cfg.bandwidth_mhz, g)
    return _fig5_batch(cfg, scenario, snr_db, kappa, f"keygen/snr={snr_db:g}", 0,
                       cfg.batch_blocks)
