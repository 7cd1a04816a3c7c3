"""Monte-Carlo experiment runner, metrics and CSV emission.

A scenario file (INI syntax, one ``[scenario:<id>]`` section per
scenario) describes the system size, targets, algorithms and trial
budget. Each trial draws one channel; each slot of a coherence block
draws fresh uniform symbols; every enabled algorithm runs on the same
(channel, symbols) pair and its metrics land in one flat record table.

Config keys (defaults in parentheses): K, M [required], sigma2 (1.0),
channel_variance (1.0), power_budget (1.0) or power_budgets sweep,
snr_targets (1.0, broadcast) or rate_targets sweep [zeta = 2^rate - 1],
weights_r (ones), weights_phi (ones), psk_order (4), trials (1000),
seed (1), coherence_block (1), algorithms (CIPM), mcs_ser_target (1e-3),
noise (false). Power-minimizing algorithms report the power they need to
grant every target; budget algorithms spend the budget exactly.
"""

from __future__ import annotations

import configparser
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import bounds as bounds_mod
from .ci_closed_form import cimrt_precoder, cizf_precoder, nmrt_factorization
from .ci_power import SnrTargets, cimm_solve, cipm_solve
from .ci_sumrate import McsTable, cisr_g, cisr_pa, genie_sumrate
from .conventional_precoders import (
    conventional_sinr,
    mmse_precoder,
    nmrt_precoder,
    zf_precoder,
)
from .errors import ConfigError, ToolkitError
from .model_core import ChannelMatrix, SymbolVector, detect_psk, generate_channel

KNOWN_ALGORITHMS = (
    "CIPM", "CIMM", "CIZF", "CIMRT", "CISR-PA", "CISR-G",
    "ZF", "MMSE", "nMRT",
    "genie_pwr", "multicast_pwr", "multicast_pwr_rank1", "genie_sr",
)
_NEEDS_WIDE_CHANNEL = ("CIZF", "CIMRT", "CISR-PA", "ZF")
_METRIC_ORDER = ("power", "per_user_snr", "sum_rate", "min_weighted_snr",
                 "energy_efficiency", "ser")

_SEED_MASK = (1 << 63) - 1


def _child_seed(seed, *key) -> int:
    ss = np.random.SeedSequence(entropy=int(seed) & _SEED_MASK,
                                spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioConfig:
    scenario_id: str
    n_users: int
    n_antennas: int
    sigma2: float = 1.0
    channel_variance: float = 1.0
    power_budget: float = 1.0
    zeta: tuple = (1.0,)
    weights_r: tuple = ()
    weights_phi: tuple = ()
    psk_order: int = 4
    trials: int = 1000
    seed: int = 1
    coherence_block: int = 1
    algorithms: tuple = ("CIPM",)
    mcs_ser_target: float = 1e-3
    noise: bool = False

    def resolved(self) -> "ScenarioConfig":
        """Broadcast per-user fields to length K."""
        k = self.n_users
        zeta = tuple(self.zeta) if len(self.zeta) == k else tuple(self.zeta) * k
        wr = tuple(self.weights_r) if self.weights_r else (1.0,) * k
        wp = tuple(self.weights_phi) if self.weights_phi else (1.0,) * k
        return replace(self, zeta=zeta, weights_r=wr, weights_phi=wp)

    def validate(self) -> list:
        violations = []
        if self.n_users < 1:
            violations.append(f"{self.scenario_id}: K must be >= 1")
        if self.n_antennas < 1:
            violations.append(f"{self.scenario_id}: M must be >= 1")
        if self.sigma2 <= 0:
            violations.append(f"{self.scenario_id}: sigma2 must be positive")
        if self.channel_variance <= 0:
            violations.append(f"{self.scenario_id}: channel_variance must be positive")
        if self.power_budget <= 0:
            violations.append(f"{self.scenario_id}: power_budget must be positive")
        if self.trials < 1:
            violations.append(f"{self.scenario_id}: trials must be >= 1")
        if self.coherence_block < 1:
            violations.append(f"{self.scenario_id}: coherence_block must be >= 1")
        if self.psk_order < 2 or self.psk_order & (self.psk_order - 1):
            violations.append(f"{self.scenario_id}: psk_order must be a power of two >= 2")
        if not 0 < self.mcs_ser_target < 1:
            violations.append(f"{self.scenario_id}: mcs_ser_target must lie in (0, 1)")
        if len(self.zeta) not in (1, self.n_users):
            violations.append(f"{self.scenario_id}: snr_targets needs 1 or K values")
        if any(z < 0 for z in self.zeta):
            violations.append(f"{self.scenario_id}: snr_targets must be nonnegative")
        for name, w in (("weights_r", self.weights_r), ("weights_phi", self.weights_phi)):
            if w and len(w) != self.n_users:
                violations.append(f"{self.scenario_id}: {name} needs K values")
        for tag in self.algorithms:
            if tag not in KNOWN_ALGORITHMS:
                violations.append(f"{self.scenario_id}: unknown algorithm '{tag}'")
            elif tag in _NEEDS_WIDE_CHANNEL and self.n_users > self.n_antennas:
                violations.append(
                    f"{self.scenario_id}: {tag} requires K <= M (got K={self.n_users}, M={self.n_antennas})")
        if "CISR-G" in self.algorithms and self.n_users > 12:
            violations.append(f"{self.scenario_id}: CISR-G enumerates subsets and needs K <= 12")
        return violations


@dataclass(frozen=True)
class MetricRecord:
    scenario_id: str
    trial: int
    slot: int
    algorithm: str
    metric: str
    value: float


_KNOWN_KEYS = {
    "k", "m", "sigma2", "channel_variance", "power_budget", "power_budgets",
    "snr_targets", "rate_targets", "weights_r", "weights_phi", "psk_order",
    "trials", "seed", "coherence_block", "algorithms", "mcs_ser_target", "noise",
}


def _parse_floats(text):
    return tuple(float(tok) for tok in text.replace(",", " ").split())


def parse_config(path) -> list:
    """Parse a scenario file into a list of fully-expanded configs.

    Sweep keys (rate_targets, power_budgets) expand into one config per
    grid point with the point recorded in the scenario id. All violations
    are collected and reported together.
    """
    parser = configparser.ConfigParser(interpolation=None)
    read = parser.read(str(path))
    if not read:
        raise ConfigError([f"cannot read config file: {path}"])

    violations = []
    configs = []
    sections = [s for s in parser.sections()]
    if not sections:
        violations.append("config file defines no [scenario:<id>] section")
    for section in sections:
        if not section.startswith("scenario:"):
            violations.append(f"unexpected section [{section}]; use [scenario:<id>]")
            continue
        name = section.split(":", 1)[1]
        raw = dict(parser.items(section))
        for key in raw:
            if key not in _KNOWN_KEYS:
                violations.append(f"{name}: unknown key '{key}'")
        missing = [req for req in ("k", "m") if req not in raw]
        if missing:
            violations.append(f"{name}: missing required key(s): {', '.join(missing)}")
            continue
        try:
            base = dict(
                n_users=int(raw["k"]),
                n_antennas=int(raw["m"]),
                sigma2=float(raw.get("sigma2", 1.0)),
                channel_variance=float(raw.get("channel_variance", 1.0)),
                psk_order=int(raw.get("psk_order", 4)),
                trials=int(raw.get("trials", 1000)),
                seed=int(raw.get("seed", 1)),
                coherence_block=int(raw.get("coherence_block", 1)),
                mcs_ser_target=float(raw.get("mcs_ser_target", 1e-3)),
                noise=raw.get("noise", "false").strip().lower() in ("1", "true", "yes", "on"),
                weights_r=_parse_floats(raw["weights_r"]) if "weights_r" in raw else (),
                weights_phi=_parse_floats(raw["weights_phi"]) if "weights_phi" in raw else (),
                algorithms=tuple(tok.strip() for tok in raw.get("algorithms", "CIPM").split(",") if tok.strip()),
            )
        except ValueError as exc:
            violations.append(f"{name}: {exc}")
            continue

        if "snr_targets" in raw and "rate_targets" in raw:
            violations.append(f"{name}: give either snr_targets or rate_targets, not both")
            continue
        if "rate_targets" in raw:
            rates = _parse_floats(raw["rate_targets"])
            target_points = [(f"{name}:R={r:g}", (2.0 ** r - 1.0,)) for r in rates]
        elif "snr_targets" in raw:
            target_points = [(name, _parse_floats(raw["snr_targets"]))]
        else:
            target_points = [(name, (1.0,))]

        budgets = (_parse_floats(raw["power_budgets"]) if "power_budgets" in raw
                   else (float(raw.get("power_budget", 1.0)),))
        sweep_budget = "power_budgets" in raw

        for point_id, zeta in target_points:
            for budget in budgets:
                sid = f"{point_id}:P={budget:g}" if sweep_budget else point_id
                cfg = ScenarioConfig(scenario_id=sid, zeta=zeta, power_budget=budget, **base)
                errs = cfg.validate()
                if errs:
                    violations.extend(errs)
                else:
                    configs.append(cfg.resolved())

    if violations:
        raise ConfigError(violations)
    return configs


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def energy_efficiency(rates, power: float) -> float:
    """Sum of per-user rates divided by the spent power."""
    if power <= 0:
        raise ValueError("power must be positive")
    return float(np.sum(np.asarray(rates, dtype=float))) / float(power)


def _rates(snr) -> np.ndarray:
    return np.log2(1.0 + np.asarray(snr, dtype=float))


def _grant_scale(channel, zeta, x0):
    """Smallest power scaling of x0 that grants every positive target."""
    zeta = np.asarray(zeta, dtype=float)
    gains = np.abs(channel.h @ x0) ** 2
    active = zeta > 0
    if not np.any(active):
        return 0.0, gains
    if np.any(gains[active] <= 0):
        raise ToolkitError("a targeted user receives no power; cannot grant targets")
    scale = float(np.max(channel.sigma2_noise * zeta[active] / gains[active]))
    return scale, gains


def _metrics_from(snr, power, cfg, served=None, ser=None, at_targets=False) -> dict:
    """Metric rows for one algorithm run.

    ``at_targets`` marks the target-granting schemes: their efficiency
    counts the target rates against the power each scheme needs, which
    compares them on an equal rate footing regardless of overshoot.
    """
    snr = np.asarray(snr, dtype=float)
    phi = np.asarray(cfg.weights_phi, dtype=float)
    r = np.asarray(cfg.weights_r, dtype=float)
    idx = list(served) if served is not None else list(range(len(snr)))
    ee_rates = _rates(np.asarray(cfg.zeta)) if at_targets else _rates(snr[idx])
    out = {
        "power": float(power),
        "per_user_snr": float(np.mean(snr)),
        "sum_rate": float(np.sum(phi[idx] * _rates(snr[idx]))),
        "min_weighted_snr": float(np.min(snr / r)),
        "energy_efficiency": energy_efficiency(ee_rates, power),
    }
    if ser is not None:
        out["ser"] = float(ser)
    return out


def _ser_for(channel, x, d, cfg, noise_vec, orders=None, served=None):
    if noise_vec is None:
        return None
    y = channel.h @ x + noise_vec
    idx = list(served) if served is not None else list(range(channel.n_users))
    if not idx:
        return 0.0
    errors = 0
    for j in idx:
        order = cfg.psk_order if orders is None or orders[j] is None else orders[j]
        sent = detect_psk(d[j].value, order, d[j].offset)
        errors += detect_psk(y[j], order, d[j].offset) != sent if y[j] != 0 else 1
    return errors / len(idx)


# ---------------------------------------------------------------------------
# per-algorithm runners
# ---------------------------------------------------------------------------

def _block_entry(block, key, builder):
    if key not in block:
        block[key] = builder()
    return block[key]


def _run_cipm(channel, d, cfg, block, noise_vec):
    sol = cipm_solve(channel, d, SnrTargets(np.array(cfg.zeta), cfg.sigma2))
    snr = np.abs(sol.per_user_rx) ** 2 / cfg.sigma2
    ser = _ser_for(channel, sol.x.x, d, cfg, noise_vec)
    return _metrics_from(snr, sol.power, cfg, ser=ser, at_targets=True)


def _run_grant_closed_form(builder):
    def run(channel, d, cfg, block, noise_vec):
        x0 = builder(channel, d, cfg, block)
        scale, gains = _grant_scale(channel, np.array(cfg.zeta), x0)
        power = scale * float(np.real(np.vdot(x0, x0)))
        snr = scale * gains / cfg.sigma2
        x = math.sqrt(scale) * x0
        ser = _ser_for(channel, x, d, cfg, noise_vec)
        return _metrics_from(snr, power, cfg, ser=ser, at_targets=True)
    return run


def _cizf_vector(channel, d, cfg, block):
    return cizf_precoder(channel, d, cfg.power_budget).x.x


def _cimrt_vector(channel, d, cfg, block):
    powers = _block_entry(block, "genie_powers", lambda: _genie_bound(channel, cfg).certificate["p"])
    return cimrt_precoder(channel, d, powers, cfg.power_budget).x.x


def _genie_bound(channel, cfg):
    state = nmrt_factorization(channel)
    zeta_rx = cfg.sigma2 * np.array(cfg.zeta)   # targets in received-power units
    return bounds_mod.genie_min_power(np.linalg.norm(state.g, axis=1), state.xi, zeta_rx)


def _run_genie_pwr(channel, d, cfg, block, noise_vec):
    result = _block_entry(block, "genie_bound", lambda: _genie_bound(channel, cfg))
    snr = result.certificate["delivered"] / cfg.sigma2
    return _metrics_from(snr, result.value, cfg, at_targets=True)


def _run_multicast_pwr(channel, d, cfg, block, noise_vec):
    result = _block_entry(block, "multicast_bound", lambda: bounds_mod.multicast_min_power(
        channel, cfg.sigma2 * np.array(cfg.zeta)))
    q = result.certificate["q"]
    snr = np.real(np.einsum("ij,jk,ik->i", channel.h, q, channel.h.conj())) / cfg.sigma2
    return _metrics_from(snr, result.value, cfg, at_targets=True)


def _run_multicast_rank1(channel, d, cfg, block, noise_vec):
    result = _block_entry(block, "multicast_rank1", lambda: bounds_mod.multicast_min_power_rank1(
        channel, cfg.sigma2 * np.array(cfg.zeta), seed=_child_seed(cfg.seed, 3)))
    w = result.certificate["w"]
    snr = np.abs(channel.h @ w) ** 2 / cfg.sigma2
    return _metrics_from(snr, result.value, cfg, at_targets=True)


def _run_cimm(channel, d, cfg, block, noise_vec):
    sol = cimm_solve(channel, d, np.array(cfg.weights_r), cfg.power_budget)
    snr = np.abs(channel.h @ sol.q.x) ** 2 / cfg.sigma2
    ser = _ser_for(channel, sol.q.x, d, cfg, noise_vec)
    return _metrics_from(snr, cfg.power_budget, cfg, ser=ser)


def _run_cisr(which):
    def run(channel, d, cfg, block, noise_vec):
        table = McsTable.from_ser_target(cfg.mcs_ser_target)
        fn = cisr_pa if which == "PA" else cisr_g
        sol = fn(channel, d, cfg.power_budget, np.array(cfg.weights_phi), table)
        ser = _ser_for(channel, sol.q.x, d, cfg, noise_vec,
                       orders=sol.per_user_order, served=sol.served)
        metrics = _metrics_from(sol.per_user_snr, cfg.power_budget, cfg,
                                served=sol.served, ser=ser)
        metrics["sum_rate"] = sol.weighted_sum_rate
        return metrics
    return run


def _run_genie_sr(channel, d, cfg, block, noise_vec):
    value = _block_entry(block, "genie_sr", lambda: _genie_sr_value(channel, cfg))
    return {"power": cfg.power_budget, "sum_rate": value,
            "energy_efficiency": value / cfg.power_budget}


def _genie_sr_value(channel, cfg):
    state = nmrt_factorization(channel)
    g_norms = np.linalg.norm(state.g, axis=1) / math.sqrt(cfg.sigma2)
    return genie_sumrate(g_norms, state.xi, cfg.power_budget)


def _run_baseline(kind):
    def run(channel, d, cfg, block, noise_vec):
        if kind == "ZF":
            pre = zf_precoder(channel)
        elif kind == "MMSE":
            pre = mmse_precoder(channel, cfg.sigma2, cfg.power_budget)
        else:
            pre = nmrt_precoder(channel)
        k = channel.n_users
        pre = pre.with_powers(np.full(k, cfg.power_budget / k))
        sinr = conventional_sinr(channel, pre, cfg.sigma2)
        x0 = pre.w @ (np.sqrt(pre.powers) * d.values)
        norm0 = np.linalg.norm(x0)
        x = x0 * (math.sqrt(cfg.power_budget) / norm0) if norm0 > 0 else x0
        ser = _ser_for(channel, x, d, cfg, noise_vec)
        return _metrics_from(sinr, cfg.power_budget, cfg, ser=ser)
    return run


_RUNNERS = {
    "CIPM": _run_cipm,
    "CIZF": _run_grant_closed_form(_cizf_vector),
    "CIMRT": _run_grant_closed_form(_cimrt_vector),
    "CIMM": _run_cimm,
    "CISR-PA": _run_cisr("PA"),
    "CISR-G": _run_cisr("G"),
    "genie_pwr": _run_genie_pwr,
    "multicast_pwr": _run_multicast_pwr,
    "multicast_pwr_rank1": _run_multicast_rank1,
    "genie_sr": _run_genie_sr,
    "ZF": _run_baseline("ZF"),
    "MMSE": _run_baseline("MMSE"),
    "nMRT": _run_baseline("nMRT"),
}


# ---------------------------------------------------------------------------
# runner
# ---------------------------------------------------------------------------

def _run_trial(cfg: ScenarioConfig, trial: int) -> list:
    records = []
    channel = generate_channel(cfg.n_users, cfg.n_antennas, cfg.channel_variance,
                               _child_seed(cfg.seed, 0, trial), sigma2_noise=cfg.sigma2)
    block = {}
    for slot in range(cfg.coherence_block):
        sym_rng = np.random.default_rng(_child_seed(cfg.seed, 1, trial, slot))
        d = SymbolVector.uniform(cfg.psk_order, cfg.n_users, sym_rng)
        noise_vec = None
        if cfg.noise:
            noise_rng = np.random.default_rng(_child_seed(cfg.seed, 2, trial, slot))
            noise_vec = math.sqrt(cfg.sigma2 / 2.0) * (
                noise_rng.standard_normal(cfg.n_users)
                + 1j * noise_rng.standard_normal(cfg.n_users))
        for tag in cfg.algorithms:
            try:
                metrics = _RUNNERS[tag](channel, d, cfg, block, noise_vec)
            except (ToolkitError, ValueError, ZeroDivisionError, np.linalg.LinAlgError):
                records.append(MetricRecord(cfg.scenario_id, trial, slot, tag, "failure", 1.0))
                continue
            for metric in _METRIC_ORDER:
                if metric in metrics:
                    records.append(MetricRecord(cfg.scenario_id, trial, slot, tag,
                                                metric, metrics[metric]))
    return records


def run_montecarlo(cfg: ScenarioConfig, threads: int = 1) -> list:
    """Run one scenario; deterministic per (config, seed) for any thread count."""
    cfg = cfg.resolved()
    errs = cfg.validate()
    if errs:
        raise ConfigError(errs)
    if threads <= 1:
        per_trial = [_run_trial(cfg, t) for t in range(cfg.trials)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_trial = list(pool.map(lambda t: _run_trial(cfg, t), range(cfg.trials)))
    return [rec for chunk in per_trial for rec in chunk]


def write_csv(records, path) -> None:
    """Emit records as UTF-8 CSV with LF endings and 12 significant digits."""
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("scenario_id,trial,slot,algorithm,metric,value\n")
            for rec in records:
                fh.write(f"{rec.scenario_id},{rec.trial},{rec.slot},"
                         f"{rec.algorithm},{rec.metric},{rec.value:.12g}\n")
    except OSError as exc:
        raise ToolkitError(f"cannot write CSV at {path}: {exc}") from exc


def read_csv(path) -> list:
    """Round-trip reader for the write_csv schema."""
    records = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "scenario_id,trial,slot,algorithm,metric,value":
            raise ToolkitError(f"unexpected CSV header in {path}")
        for line in fh:
            sid, trial, slot, alg, metric, value = line.rstrip("\n").split(",")
            records.append(MetricRecord(sid, int(trial), int(slot), alg, metric, float(value)))
    return records
