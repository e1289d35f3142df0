"""
Monte Carlo experiment runner.

Each trial draws its channel, data and noise from counter-based substreams
keyed by ``(seed, sweep index, trial)``, so results do not depend on the
number of workers or on execution order. FBMC and OFDM arms of a trial share
the channel realization (and layout) and the data bits; their receiver noise
comes from separate substreams. Per-trial sufficient statistics are reduced
in trial order.
"""

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import cellfree
from .channel import apply_channel, complex_noise, draw_realization, tdlc_pdp
from .equalizer import (
    ErrorStatsView,
    apply_csi_correction,
    approximate_pdp,
    build_combiner,
    combine_stream,
    composite_pulse,
    composite_pulses,
    design_fse_bank,
    equalize_stream,
    equivalent_channel,
    nyquist_target,
    pulse_halfwidth,
    subcarrier_gains,
)
from .estimation import assemble_model, build_pilot_plan, estimate_channels, extract_pilots
from .fbmc import SymbolFrame, analyze, design_phydyas, synthesize
from .metrics import SinrStats, pam_demodulate, qam_demodulate, qam_modulate, qam_bits_per_symbol
from .ofdm import OfdmConfig, ofdm_detect, ofdm_modulate

__all__ = ["CSV_HEADER", "ExperimentResult", "arm_label", "run_experiment", "run_trial", "write_csv"]

CSV_HEADER = ("scenario", "waveform", "sweep_param", "sweep_value", "user", "metric", "value",
              "trials", "seed")
STREAMS = ("channel", "data", "noise", "ofdm_noise")


def arm_label(fse_length, design=None, corrected=False):
    """Waveform label of an FBMC receiver arm, e.g. ``fbmc/fse=5/design=pdp-exact/corr=off``."""
    if fse_length == 0:
        return "fbmc/fse=0"
    return f"fbmc/fse={fse_length}/design={design}/corr={'on' if corrected else 'off'}"


def _arms(cfg):
    arms = []
    for L in cfg.fse_lengths:
        if L == 0:
            arms.append((0, None, False))
            continue
        for design in cfg.fse_designs:
            for corr in cfg.corrections:
                arms.append((int(L), design, bool(corr)))
    return arms


@dataclass
class TrialResult:
    """Per-user statistics of one trial, keyed by waveform label."""

    sinr: dict = field(default_factory=dict)
    bit_errors: dict = field(default_factory=dict)
    bits: dict = field(default_factory=dict)
    nmse_num: np.ndarray = None
    nmse_den: np.ndarray = None


@dataclass
class ExperimentResult:
    """Aggregated metrics plus the CSV rows in emission order."""

    config: object
    rows: list

    def value(self, waveform, metric, sweep_value, user="all"):
        """Look up one numeric result."""
        key = _fmt_sweep(sweep_value)
        for r in self.rows:
            if r[1] == waveform and r[5] == metric and r[3] == key and r[4] == str(user):
                return float(r[6])
        raise KeyError((waveform, metric, sweep_value, user))

    def values(self, waveform, metric, user="all"):
        """``{sweep_value: value}`` for one waveform/metric."""
        return {
            float(r[3]): float(r[6])
            for r in self.rows
            if r[1] == waveform and r[5] == metric and r[4] == str(user)
        }

    def samples(self, waveform, metric="sinr_db"):
        """Per-trial per-user values (``samples`` metric), as a flat array."""
        name = f"{metric}_sample"
        return np.array([float(r[6]) for r in self.rows if r[1] == waveform and r[5] == name])


def _fmt_sweep(v):
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def _fmt(v):
    return f"{float(v):.10g}"


def _rngs(seed, point_idx, trial):
    ss = np.random.SeedSequence([seed, point_idx, trial])
    return {name: np.random.Generator(np.random.Philox(s)) for name, s in zip(STREAMS, ss.spawn(len(STREAMS)))}


@lru_cache(maxsize=8)
def _filter(M, kappa):
    return design_phydyas(M, kappa)


@lru_cache(maxsize=8)
def _plan(K, L, M, kappa):
    return build_pilot_plan(K, L, M, kappa=kappa)


@lru_cache(maxsize=32)
def _colocated_model(K, L, M, kappa, noise_var):
    return assemble_model(_plan(K, L, M, kappa), _filter(M, kappa), noise_var)


class _Context:
    """Per-sweep-point constants shared by all trials."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.filt = _filter(cfg.subcarriers, cfg.overlap)
        self.plan = _plan(cfg.users, cfg.channel_length, cfg.subcarriers, cfg.overlap)
        self.halfwidth = pulse_halfwidth(self.filt, cfg.channel_length)
        self.target = nyquist_target(self.filt, self.halfwidth)
        self.arms = _arms(cfg)
        self.max_fse = max(cfg.fse_lengths)
        self.data_start = self.plan.data_start
        # extra analyzed slots so the FSE look-ahead sees the tail of the frame
        self.tail = self.max_fse + 2
        self.n_slots = self.data_start + cfg.data_slots + self.tail
        self.ofdm = OfdmConfig(cfg.subcarriers, cfg.cp_length, cfg.qam_order)
        self.bits_per_symbol = qam_bits_per_symbol(cfg.qam_order)
        if cfg.noise == "snr":
            self.noise_var = 10.0 ** (-cfg.snr_db / 10)
        elif cfg.noise == "physical":
            self.noise_var = cellfree.noise_power(
                cfg.temperature_k, cellfree.BOLTZMANN, cfg.bandwidth_hz, cfg.noise_figure_db
            )
        else:
            self.noise_var = 0.0


def _draw_channel(ctx, rng):
    cfg = ctx.cfg
    K, L = cfg.users, cfg.channel_length
    lo, hi = cfg.delay_spread_ns
    spreads = rng.uniform(lo, hi, size=K) * 1e-9
    pdps = [tdlc_pdp(d, cfg.sample_rate) for d in spreads]
    if max(p.length for p in pdps) > L:
        raise ValueError("channel_length is shorter than the drawn power delay profile")
    pdps = [p.padded(L) for p in pdps]
    if cfg.scenario == "colocated":
        real = draw_realization(pdps, cfg.N, K, rng)
        return real, pdps, np.ones(K), None
    layout = cellfree.build_layout(cfg.n_aps, cfg.antennas_per_ap, K, cfg.area_side_km, rng)
    power = cellfree.fractional_power_control(layout.beta, cfg.nu, cfg.p_max_w)
    real = draw_realization(pdps, layout.num_antennas, K, rng, large_scale=layout.beta)
    return real, pdps, power.mu, layout


def _fbmc_symbols(qam):
    """Split complex QAM ``(K, M, S/2)`` into real slots: Re on even, Im on odd."""
    K, M, half = qam.shape
    out = np.empty((K, M, 2 * half))
    out[:, :, 0::2] = qam.real
    out[:, :, 1::2] = qam.imag
    return out


def run_trial(cfg, point_idx, trial, ctx=None):
    """
    Simulate one trial at one sweep point.

    Returns
    -------
    TrialResult
    """
    ctx = _Context(cfg) if ctx is None else ctx
    rngs = _rngs(cfg.seed, point_idx, trial)
    K, M = cfg.users, cfg.subcarriers
    real, pdps, mu, layout = _draw_channel(ctx, rngs["channel"])
    N = real.num_antennas
    noise_var = ctx.noise_var

    n_qam = cfg.data_slots // 2
    bits = rngs["data"].integers(0, 2, size=(K, M, n_qam * ctx.bits_per_symbol))
    qam = qam_modulate(bits, cfg.qam_order)
    res = TrialResult()

    # channel estimation and CSI shared by both waveforms
    need_estimate = cfg.csi == "estimated"
    grid = None
    if cfg.run_fbmc or need_estimate:
        symbols = np.zeros((K, M, ctx.n_slots))
        for k in range(K):
            symbols[k, ctx.plan.subcarriers[k], 0] = ctx.plan.values[k]
        symbols[:, :, ctx.data_start : ctx.data_start + cfg.data_slots] = _fbmc_symbols(qam)
        x = synthesize(SymbolFrame(symbols, mu), ctx.filt)
        r = apply_channel(x, real)
        if noise_var > 0:
            r += complex_noise(r.shape, noise_var, rngs["noise"])
        grid = analyze(r, ctx.filt, ctx.n_slots)

    if need_estimate:
        if cfg.scenario == "colocated":
            model = _colocated_model(K, cfg.channel_length, M, cfg.overlap, noise_var)
        else:
            model = assemble_model(ctx.plan, ctx.filt, noise_var, pilot_gains=np.sqrt(mu))
        taps = estimate_channels(model, extract_pilots(grid, ctx.plan))
        tap_var = model.tap_error_variances()
        if cfg.scenario == "colocated":
            tap_var = np.full(K, tap_var.mean())
        res.nmse_num = np.sum(np.abs(taps - real.taps) ** 2, axis=(0, 2))
        res.nmse_den = np.sum(np.abs(real.taps) ** 2, axis=(0, 2))
    else:
        taps = real.taps
        tap_var = np.zeros(K)
    freq_var = cfg.channel_length * tap_var
    scaled = taps * np.sqrt(mu)[None, :, None]
    bank = build_combiner(subcarrier_gains(scaled, M), cfg.combiner, noise_var)
    truth_fbmc = _fbmc_symbols(qam)

    if cfg.run_fbmc:
        y = combine_stream(grid, bank)
        data = slice(ctx.data_start, ctx.data_start + cfg.data_slots)
        correction_context = {}
        if cfg.scenario == "cellfree":
            # the combiner is built on sqrt(mu)-scaled gains, so user k's row
            # is already divided by sqrt(mu_k) and the sqrt(mu_k) in the
            # correction term cancels
            correction_context = {"N": N, "power_coeffs": np.ones(K), "beta_sum": layout.beta_sums()}
        cache = {}
        for L_fse, design, corrected in ctx.arms:
            label = arm_label(L_fse, design, corrected)
            if L_fse == 0:
                s_hat = y.real[:, :, data]
            else:
                fse = _design(ctx, cfg, design, corrected, L_fse, bank, taps, pdps, mu,
                              tap_var, freq_var, noise_var, correction_context, cache)
                s_hat = equalize_stream(y, fse)[:, :, data]
            _accumulate(res, label, s_hat, truth_fbmc, bits, cfg.qam_order, real_valued=True)

    if cfg.run_ofdm:
        n_sym = n_qam
        tx = ofdm_modulate(qam, ctx.ofdm, power_coeffs=mu)
        r = apply_channel(tx, real)
        if noise_var > 0:
            r += complex_noise(r.shape, noise_var, rngs["ofdm_noise"])
        det = ofdm_detect(r, taps, cfg.combiner, noise_var, ctx.ofdm, n_sym, power_coeffs=mu)
        _accumulate(res, "ofdm", det.estimates, qam, bits, cfg.qam_order, real_valued=False)
    return res


def _design(ctx, cfg, design, corrected, L_fse, bank, taps, pdps, mu, tap_var, freq_var,
            noise_var, correction_context, cache):
    key = (design, corrected)
    if key not in cache:
        mode = "none"
        if design == "equivalent":
            source = equivalent_channel(bank, taps, mu)
            if corrected:
                mode = "subtract-term-cellfree" if cfg.scenario == "cellfree" else "subtract-term-small"
        else:
            source = pdps if design == "pdp-exact" else approximate_pdp(taps)
            if corrected:
                mode = "colocated-scale"
        if mode != "none":
            stats = ErrorStatsView(tap_var, freq_var, mode, correction_context)
            source = apply_csi_correction(source, stats)
        if design == "equivalent":
            pulses = composite_pulses(source, ctx.filt, ctx.halfwidth)
        else:
            pulses = np.stack(
                [composite_pulse(p, ctx.filt, mode="pdp", halfwidth=ctx.halfwidth) for p in source]
            )[:, None, :]
        cache[key] = pulses
    pulses = cache[key]
    level = 0.0
    if cfg.fse_kind == "mmse":
        gain = bank.noise_gain()
        level = noise_var * (gain[None, :] if design == "equivalent" else gain.mean())
        level = np.broadcast_to(level, pulses.shape[:-1])
    return design_fse_bank(pulses, ctx.target, L_fse, cfg.fse_kind, level)


def _accumulate(res, label, s_hat, truth, bits, order, real_valued):
    K = truth.shape[0]
    est = s_hat.reshape(K, -1)
    ref = truth.reshape(K, -1)
    res.sinr[label] = SinrStats((K,)).update(est, ref)
    if real_valued:
        # real slots carry alternately the I and Q components of each QAM symbol
        re = pam_demodulate(s_hat[:, :, 0::2], order)
        im = pam_demodulate(s_hat[:, :, 1::2], order)
        decided = np.concatenate([re, im], axis=-1).reshape(bits.shape)
    else:
        decided = qam_demodulate(s_hat, order)
    res.bit_errors[label] = np.sum(decided != bits, axis=(1, 2))
    res.bits[label] = np.full(K, bits[0].size)


def _point_rows(cfg, value, results, ctx):
    rows = []
    metric = "sir_db" if cfg.noise == "none" else "sinr_db"
    labels = list(results[0].sinr)
    base = (cfg.scenario,)
    sweep = (cfg.sweep_param, _fmt_sweep(value))
    tail = (str(cfg.trials), str(cfg.seed))
    for label in labels:
        total = SinrStats((cfg.users,))
        errs = np.zeros(cfg.users)
        nbits = np.zeros(cfg.users)
        for t in results:
            total.merge(t.sinr[label])
            errs += t.bit_errors[label]
            nbits += t.bits[label]
        per_user = total.sinr_db()
        if "sinr" in cfg.metrics:
            for k in range(cfg.users):
                rows.append(base + (label,) + sweep + (str(k), metric, _fmt(per_user[k])) + tail)
            rows.append(base + (label,) + sweep + ("all", metric, _fmt(total.pooled_sinr_db())) + tail)
            # average of per-trial, per-user values in dB; each cell-free
            # trial is a new drop, so this is the per-drop mean
            mean_db = np.mean([t.sinr[label].sinr_db() for t in results])
            rows.append(base + (label,) + sweep + ("all", f"mean_{metric}", _fmt(mean_db)) + tail)
        if "ber" in cfg.metrics:
            for k in range(cfg.users):
                rows.append(base + (label,) + sweep + (str(k), "ber", _fmt(errs[k] / nbits[k])) + tail)
            rows.append(base + (label,) + sweep + ("all", "ber", _fmt(errs.sum() / nbits.sum())) + tail)
        if "samples" in cfg.metrics:
            for i, t in enumerate(results):
                vals = t.sinr[label].sinr_db()
                for k in range(cfg.users):
                    rows.append(base + (label,) + sweep + (f"{k}@{i}", f"{metric}_sample", _fmt(vals[k])) + tail)
    if "nmse" in cfg.metrics and cfg.csi == "estimated":
        num = sum(t.nmse_num for t in results)
        den = sum(t.nmse_den for t in results)
        for k in range(cfg.users):
            rows.append(base + ("estimation",) + sweep + (str(k), "nmse", _fmt(num[k] / den[k])) + tail)
        rows.append(base + ("estimation",) + sweep + ("all", "nmse", _fmt(num.sum() / den.sum())) + tail)
    return rows


def run_experiment(cfg, threads=1, out=None):
    """
    Run every sweep point of a configuration.

    Parameters
    ----------
    cfg : ExperimentConfig
    threads : int
        Worker threads; results are identical for any value.
    out : str or path-like, optional
        CSV destination.

    Returns
    -------
    ExperimentResult
    """
    if threads < 1:
        raise ValueError("threads must be >= 1")
    rows = []
    for idx, value in enumerate(cfg.sweep_values):
        point = cfg.point(value)
        ctx = _Context(point)
        work = lambda t: run_trial(point, idx, t, ctx)
        if threads == 1:
            results = [work(t) for t in range(cfg.trials)]
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(work, range(cfg.trials)))
        rows.extend(_point_rows(point, value, results, ctx))
    result = ExperimentResult(cfg, rows)
    if out is not None:
        write_csv(out, result)
    return result


def write_csv(path, result):
    """Write the result rows with the fixed header; returns the CSV text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    w.writerows(result.rows)
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text
