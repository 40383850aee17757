"""Experiment configuration: schema, presets and the key = value file format.

A config file holds one ``key = value`` pair per line; ``#`` starts a
comment and blank lines are ignored. Lists are comma separated, integer
ranges may be written ``start:step:stop`` (inclusive). Errors carry the
offending line number.

Power is given either as ``P_pilot``/``P_data`` (linear, relative to
``N0``) or as ``ebn0_db``; ``ebn0_db = auto`` asks the analysis for the
required Eb/N0 (LMMSE model, collision adjusted) and adds ``ebn0_margin_db``.
"""

import dataclasses
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

from pilot_ura.errors import ConfigError


@dataclass
class ExperimentConfig:
    n_p: int = 384
    n_d: int = 1024
    B: int = 60
    J: int = 12
    M: int = 16
    K_a: int = 30
    N0: float = 1.0
    P_pilot: float = 1.0
    P_data: float = 1.0
    ebn0_db: object = None
    ebn0_margin_db: float = 0.0
    lsfc: list = None
    known_lsfc: bool = True
    trials: int = 100
    campaign_seed: int = 0
    pilot_seed: int = 1
    # activity detection
    support_rule: str = "known_Ka"
    threshold: float = None
    amp_max_iters: int = 50
    amp_damping: float = 0.7
    amp_tol: float = 1e-6
    amp_sparsity: float = None
    # single-user code
    crc_bits: int = 16
    list_size: int = 32
    design_snr: float = None
    minsum: bool = False
    llr_noise: str = "analytic"
    # second decode with the two-user demapper on rows with a large channel estimate
    pair_pass: bool = True
    pair_energy_ratio: float = 1.5
    # output list
    dedup: bool = True
    truncate: bool = False
    # analysis
    p_e: float = 0.05
    collision_adjust: bool = True
    mse_draws: int = 10
    K_a_grid: list = field(default_factory=lambda: list(range(100, 1101, 100)))
    M_grid: list = field(default_factory=lambda: [25, 50, 100])

    @property
    def N(self):
        return 2**self.J

    @property
    def n(self):
        return self.n_p + self.n_d

    @property
    def block_length(self):
        return 2 * self.n_d

    @property
    def payload_bits(self):
        return self.B - self.J

    def validate(self, lines=None):
        lines = lines or {}

        def bad(key, msg):
            raise ConfigError(msg, lines.get(key))

        for key in ("n_p", "n_d", "B", "J", "M", "K_a", "trials", "list_size", "amp_max_iters", "mse_draws"):
            if getattr(self, key) < 1:
                bad(key, f"{key} must be positive")
        if self.B <= self.J:
            bad("B", f"B={self.B} must exceed J={self.J}")
        if self.n_p > self.N:
            bad("n_p", f"n_p={self.n_p} exceeds the pilot pool size N=2^J={self.N}")
        if self.n_d & (self.n_d - 1):
            bad("n_d", f"2*n_d={self.block_length} must be a power of two for the polar code")
        if self.payload_bits + self.crc_bits >= self.block_length:
            bad("crc_bits", "payload + CRC bits do not fit in the code block")
        if self.B < 63 and self.K_a > 2**self.B:
            bad("K_a", "more active users than distinct messages")
        if self.N0 <= 0:
            bad("N0", "N0 must be positive")
        if self.ebn0_db is None and (self.P_pilot < 0 or self.P_data < 0):
            bad("P_pilot", "powers must be non-negative")
        if self.ebn0_db is not None and self.ebn0_db != "auto" and not isinstance(self.ebn0_db, (int, float)):
            bad("ebn0_db", "ebn0_db must be a number or 'auto'")
        if self.support_rule not in ("known_Ka", "threshold"):
            bad("support_rule", "support_rule must be known_Ka or threshold")
        if self.support_rule == "threshold" and self.threshold is None:
            bad("threshold", "support_rule = threshold needs a threshold")
        if self.truncate and self.support_rule != "known_Ka":
            bad("truncate", "list truncation needs support_rule = known_Ka")
        if not 0 < self.amp_damping <= 1:
            bad("amp_damping", "amp_damping must lie in (0, 1]")
        if self.llr_noise not in ("analytic", "empirical"):
            bad("llr_noise", "llr_noise must be analytic or empirical")
        if not 0 < self.p_e < 1:
            bad("p_e", "p_e must lie in (0, 1)")
        if self.lsfc is not None and (len(self.lsfc) != self.K_a or min(self.lsfc) <= 0):
            bad("lsfc", "lsfc needs K_a positive entries")
        return self

    def resolved(self):
        """Copy with ``ebn0_db`` turned into concrete linear powers."""
        if self.ebn0_db is None:
            return self
        from pilot_ura.analysis import power_from_ebn0_db, required_ebn0

        target = self.ebn0_db
        if target == "auto":
            target = required_ebn0(
                self.K_a, self.M, self.n_p, self.n_d, self.B, self.J, self.p_e,
                "lmmse", self.collision_adjust, N0=self.N0, draws=self.mse_draws,
            )
            if not math.isfinite(target):
                raise ConfigError("analysis finds no feasible power for this configuration")
        target = float(target) + self.ebn0_margin_db
        P = power_from_ebn0_db(target, self.n_p, self.n_d, self.B, self.N0)
        return dataclasses.replace(self, ebn0_db=None, ebn0_margin_db=0.0, P_pilot=P, P_data=P)

    def amp_config(self):
        from pilot_ura.amp import AmpConfig

        known = self.K_a if self.support_rule == "known_Ka" else None
        g = 1.0 if self.lsfc is None else sum(self.lsfc) / len(self.lsfc)
        return AmpConfig(
            sparsity=self.amp_sparsity or min(self.K_a / self.N, 0.5),
            prior_power=max(self.P_pilot * g, 1e-300),
            known_Ka=known,
            threshold=self.threshold if known is None else None,
            max_iters=self.amp_max_iters,
            damping=self.amp_damping,
            tol=self.amp_tol,
        )

    def code(self):
        return _code(self.block_length, self.payload_bits, self.crc_bits, self.list_size,
                     self._design_snr(), self.minsum)

    def _design_snr(self):
        if self.design_snr is not None:
            return float(self.design_snr)
        from pilot_ura.analysis import collision_loss, required_sinr

        p_e = self.p_e - (collision_loss(self.K_a, self.N) if self.collision_adjust else 0.0)
        sinr = required_sinr(self.payload_bits / self.block_length, self.n_d, max(p_e, 1e-3))
        # per coded bit Es/N0 of Gray QPSK is half the symbol SINR
        return sinr / 2.0

    def as_items(self):
        return [(f.name, getattr(self, f.name)) for f in dataclasses.fields(self)]


def default_design_snr(payload_bits, n_d, p_e=0.05):
    from pilot_ura.analysis import required_sinr

    return required_sinr(payload_bits / (2 * n_d), n_d, p_e) / 2.0


@lru_cache(maxsize=16)
def _code(block_length, payload_bits, crc_bits, list_size, design_snr, minsum):
    from pilot_ura.polar import construct, design_z0

    return construct(block_length, payload_bits, crc_bits, design_z0(design_snr), list_size, minsum=minsum)


PRESETS = {
    # end-to-end desk scale campaign; power from the analysis plus margin
    "desk": {
        "n_p": 384, "n_d": 1024, "B": 60, "J": 12, "M": 16, "K_a": 30,
        "trials": 200, "ebn0_db": "auto", "ebn0_margin_db": 1.5,
    },
    # full simulation parameter set of the large-scale experiments
    "large": {
        "n_p": 1152, "n_d": 2048, "B": 100, "J": 16, "M": 100, "K_a": 500,
        "trials": 20, "ebn0_db": "auto", "ebn0_margin_db": 1.0,
    },
    # analysis grid for required Eb/N0 over K_a and M
    "curves": {
        "n_p": 1152, "n_d": 2048, "B": 100, "J": 16, "p_e": 0.05,
        "K_a_grid": list(range(100, 1101, 100)), "M_grid": [25, 50, 100],
    },
}

_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_LIST_KEYS = {"lsfc": float, "K_a_grid": int, "M_grid": int}


def _parse_scalar(key, raw, default):
    low = raw.lower()
    if low in ("none", "null", ""):
        return None
    if key == "ebn0_db" and low == "auto":
        return "auto"
    kind = type(default) if default is not None else None
    if key in ("threshold", "amp_sparsity", "design_snr", "ebn0_db"):
        kind = float
    if kind is bool:
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw


def _parse_list(raw, kind):
    out = []
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            bits = [float(x) for x in part.split(":")]
            if len(bits) != 3 or bits[1] == 0:
                raise ValueError(f"range {part!r} must be start:step:stop")
            start, step, stop = bits
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            out.extend(kind(start + i * step) for i in range(max(count, 0)))
        else:
            out.append(kind(float(part)) if kind is int else kind(part))
    return out


def parse_items(pairs, base=None):
    """Build a validated config from ``(key, raw_value, line)`` triples."""
    cfg = dataclasses.replace(base) if base is not None else ExperimentConfig()
    lines = {}
    for key, raw, line in pairs:
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r}", line)
        try:
            if key in _LIST_KEYS:
                value = None if raw.strip().lower() in ("none", "") else _parse_list(raw, _LIST_KEYS[key])
            else:
                value = _parse_scalar(key, raw.strip(), _FIELDS[key].default)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", line) from None
        setattr(cfg, key, value)
        lines[key] = line
    return cfg.validate(lines)


def parse_text(text, base=None):
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", lineno)
        key, value = body.split("=", 1)
        pairs.append((key.strip(), value.strip(), lineno))
    return parse_items(pairs, base)


def preset(name):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r} (known: {', '.join(sorted(PRESETS))})")
    cfg = ExperimentConfig()
    for key, value in PRESETS[name].items():
        setattr(cfg, key, value)
    return cfg.validate()


def load_config(source):
    """Load a preset name or a config file path."""
    if source in PRESETS:
        return preset(source)
    path = Path(source)
    if not path.exists():
        raise ConfigError(f"no preset or file named {source!r}")
    return parse_text(path.read_text())


def dump_config(cfg):
    out = []
    for key, value in cfg.as_items():
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        out.append(f"{key} = {value}")
    return "\n".join(out) + "\n"
