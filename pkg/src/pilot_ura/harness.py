"""Monte Carlo campaigns over the full receiver chain.

Trial ``t`` of a campaign draws everything from the seed
``campaign_seed + t``, so trials can run in any order or process and the
report (and its CSV) is identical for a given seed.
"""

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from pilot_ura.amp import run_mmv_amp, support_f1
from pilot_ura.analysis import lin2db
from pilot_ura.channel import draw_scene, emit_data_signal, emit_pilot_signal, int_to_bits
from pilot_ura.mud import lmmse_estimate, mrc_detect, qpsk_llr_pair, qpsk_modulate
from pilot_ura.pilots import build_pilot_book
from pilot_ura.polar import encode, scl_decode

log = logging.getLogger(__name__)

CSV_SCHEMA = "pilot_ura.trials/2"
TRIAL_COLUMNS = (
    "trial", "seed", "n_md", "n_fa", "list_size", "support_f1", "ad_missed_users",
    "collisions", "decoded_rows", "crc_candidates", "pair_rows", "amp_iterations", "amp_converged",
    "error",
)


@dataclass
class TrialReport:
    trial: int
    seed: int
    K_a: int
    output_list: list
    n_md: int
    n_fa: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def list_size(self):
        return len(self.output_list)

    @property
    def fa_fraction(self):
        # an empty list holds no false alarm
        return self.n_fa / self.list_size if self.list_size else 0.0

    def row(self):
        d = self.diagnostics
        return {
            "trial": self.trial, "seed": self.seed, "n_md": self.n_md, "n_fa": self.n_fa,
            "list_size": self.list_size,
            "support_f1": f"{d.get('support_f1', float('nan')):.6f}",
            "ad_missed_users": d.get("ad_missed_users", ""),
            "collisions": d.get("collisions", ""),
            "decoded_rows": d.get("decoded_rows", ""),
            "crc_candidates": d.get("crc_candidates", ""),
            "pair_rows": d.get("pair_rows", ""),
            "amp_iterations": d.get("amp_iterations", ""),
            "amp_converged": int(bool(d.get("amp_converged", False))),
            "error": d.get("error", ""),
        }


def wilson(p, n, z=1.96):
    """Wilson score interval ``(lo, hi)`` for a proportion ``p`` over ``n`` draws."""
    if n <= 0:
        return 0.0, 1.0
    den = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(centre - half, 0.0), min(centre + half, 1.0)


@dataclass
class CampaignReport:
    config: object
    trials: list = field(repr=False)

    @property
    def K_a(self):
        return self.config.K_a

    @property
    def p_md(self):
        return float(np.mean([t.n_md for t in self.trials])) / self.K_a

    @property
    def p_fa(self):
        return float(np.mean([t.fa_fraction for t in self.trials]))

    @property
    def p_e(self):
        return self.p_md + self.p_fa

    def interval(self, which):
        p = {"p_md": self.p_md, "p_fa": self.p_fa}[which]
        return wilson(p, len(self.trials) * self.K_a)

    def half_width(self, which):
        lo, hi = self.interval(which)
        return 0.5 * (hi - lo)

    def summary(self):
        c = self.config
        return (
            f"trials={len(self.trials)} K_a={c.K_a} M={c.M} P={c.P_data:.6g} "
            f"({float(lin2db(max(c.P_data, 1e-300))):.3f} dB) "
            f"p_md={self.p_md:.5f}±{self.half_width('p_md'):.5f} "
            f"p_fa={self.p_fa:.5f}±{self.half_width('p_fa'):.5f} P_e={self.p_e:.5f}"
        )

    def to_csv(self):
        buf = io.StringIO()
        buf.write(f"# schema: {CSV_SCHEMA}\n")
        c = self.config
        for key, value in c.as_items():
            buf.write(f"# {key} = {value}\n")
        for name in ("P_pilot", "P_data"):
            P = getattr(c, name)
            db = float(lin2db(P)) if P > 0 else -math.inf
            buf.write(f"# {name}_lin = {P:.9g}  {name}_db = {db:.6f}\n")
        w = csv.DictWriter(buf, fieldnames=TRIAL_COLUMNS, lineterminator="\n")
        w.writeheader()
        for t in self.trials:
            w.writerow(t.row())
        buf.write(f"# p_md = {self.p_md:.9g}\n# p_fa = {self.p_fa:.9g}\n# P_e = {self.p_e:.9g}\n")
        return buf.getvalue()


def _book_for(cfg):
    return build_pilot_book(cfg.N, cfg.n_p, cfg.pilot_seed)


def _assemble_list(cfg, entries, fallbacks, rng):
    """Output list from CRC-valid candidates; with truncation exactly ``K_a`` long."""
    if not cfg.truncate:
        ranked = [msg for _, msg in sorted(entries, key=lambda e: e[0])]
        if cfg.dedup:
            ranked = list(dict.fromkeys(ranked))
        return ranked
    out = []
    seen = set()
    for _, msg in sorted(entries, key=lambda e: e[0]) + sorted(fallbacks, key=lambda e: e[0]):
        if len(out) == cfg.K_a:
            break
        if msg not in seen:
            seen.add(msg)
            out.append(msg)
    while len(out) < cfg.K_a:
        msg = rng.integers(0, 2, size=cfg.B, dtype=np.uint8).tobytes()
        if msg not in seen:
            seen.add(msg)
            out.append(msg)
    return out


def run_trial(cfg, book, trial_index):
    """One random-access frame through detection, estimation, MRC and decoding."""
    seed = cfg.campaign_seed + trial_index
    rng = np.random.default_rng(seed)
    code = cfg.code()
    scene = draw_scene(cfg, rng)
    transmitted = {m.tobytes() for m in scene.messages}
    diag = {}
    entries, fallbacks = [], []
    try:
        Y_p = emit_pilot_signal(scene, book, rng)
        symbols = qpsk_modulate(encode(code, scene.payloads))
        Y_d = emit_data_signal(scene, symbols, rng)

        pilots, counts = np.unique(scene.pilot_indices, return_counts=True)
        diag["collisions"] = int(np.sum(counts >= 2))
        amp = run_mmv_amp(Y_p, book, cfg.amp_config())
        support = amp.support
        diag["amp_iterations"] = amp.iterations
        diag["amp_converged"] = amp.converged
        diag["support_f1"] = support_f1(support, pilots)
        diag["ad_missed_users"] = int(np.sum(~np.isin(scene.pilot_indices, support)))

        if cfg.known_lsfc:
            g = 1.0 if cfg.lsfc is None else float(np.mean(cfg.lsfc))
            gamma = np.full(support.size, cfg.P_pilot * g)
        else:
            gamma = amp.gamma_hat[support]
        # rows without received power carry nothing to estimate
        support, gamma = support[gamma > 0], gamma[gamma > 0]
        est = lmmse_estimate(Y_p, book, support, gamma, cfg.N0)
        soft = mrc_detect(Y_d, est, gamma, P_pilot=cfg.P_pilot, P_data=cfg.P_data,
                          N0=cfg.N0, noise_model=cfg.llr_noise)
        energy = np.sum(np.abs(est.H_hat) ** 2, axis=1) / (cfg.M * np.maximum(1.0 - est.mse_diag, 1e-12))
        decoded = ncand = pair_rows = 0
        for k, pilot in enumerate(support):
            if soft.excluded[k]:
                continue
            out = scl_decode(code, soft.llrs[k])
            found = dict(zip((c.tobytes() for c in out.candidates), out.metrics))
            if cfg.pair_pass and energy[k] >= cfg.pair_energy_ratio:
                # looks like two users on one pilot: decode again against the superposition
                pair_rows += 1
                nv = 1.0 / max(soft.sinr[k], 1e-300) + 2.0 / cfg.M
                alt = scl_decode(code, qpsk_llr_pair(soft.S_hat[k], nv))
                for c, m in zip(alt.candidates, alt.metrics):
                    found.setdefault(c.tobytes(), m)
            prefix = int_to_bits(pilot, cfg.J)
            for cand, metric in found.items():
                entries.append((metric, prefix.tobytes() + cand))
            decoded += bool(found)
            ncand += len(found)
            fallbacks.append((out.best_metric, np.concatenate([prefix, out.best]).tobytes()))
        diag["decoded_rows"] = decoded
        diag["crc_candidates"] = ncand
        diag["pair_rows"] = pair_rows
    except Exception as exc:  # a failed stage costs this trial, not the campaign
        log.exception("trial %d failed", trial_index)
        diag["error"] = f"{type(exc).__name__}: {exc}"

    L = _assemble_list(cfg, entries, fallbacks, rng)
    listed = set(L)
    n_md = len(transmitted - listed)
    n_fa = sum(1 for m in L if m not in transmitted)
    if len(L) != n_fa + cfg.K_a - n_md:
        raise AssertionError("list size identity violated")
    return TrialReport(trial=trial_index, seed=seed, K_a=cfg.K_a, output_list=L,
                       n_md=n_md, n_fa=n_fa, diagnostics=diag)


def _trial_worker(args):
    cfg, idx = args
    return run_trial(cfg, _book_for(cfg), idx)


def run_campaign(cfg, workers=1, progress=None):
    """Run ``cfg.trials`` trials and aggregate p_md / p_fa."""
    cfg = cfg.resolved()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trials = list(pool.map(_trial_worker, [(cfg, i) for i in range(cfg.trials)]))
    else:
        book = _book_for(cfg)
        trials = []
        for i in range(cfg.trials):
            trials.append(run_trial(cfg, book, i))
            if progress is not None:
                progress(i + 1, cfg.trials)
    trials.sort(key=lambda t: t.trial)
    return CampaignReport(config=cfg, trials=trials)
