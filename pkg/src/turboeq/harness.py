"""
Campaign engine: seeded Monte Carlo BER/BLER sweeps, EXIT sweeps, achievable
rates and FLOP reports, driven by a YAML/JSON configuration.
"""

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np
import yaml

from . import equalizer as eq
from .analysis import ExitPoint, achievable_rate, exit_curve, mi_trajectory
from .link import LinkConfig, frame_rng, transmit, turbo_receive
from .mapping import constellation
from .numerics import FlopCounter, Receiver, flop_count
from .txchain import ChannelModel, apply_channel, channel_preset, load_taps

CSV_VERSION = "turboeq-csv v1"
CONSTELLATIONS = ("bpsk", "qpsk", "8psk", "16qam")
CAMPAIGN_RECEIVERS = eq.RECEIVERS + ("dfe-hard", "mfb")


class ConfigInvalid(ValueError):
    """Configuration rejected; the message names the offending field."""


@dataclass
class CampaignConfig:
    receivers: list = field(default_factory=lambda: ["dfe-ic-ep"])
    constellation: str = "bpsk"
    channel: object = "proakis-c"
    K_b: int = 2048
    generator: list | None = field(default_factory=lambda: [7, 5])
    ebn0_db: list = field(default_factory=lambda: [7.0])
    turbo_iters: int = 7
    self_iters: object = 0
    beta: object = 0.0
    min_frames: int = 200
    min_frame_errors: int = 100
    max_frames: int = 200
    seed: int = 1
    window: dict | None = None
    workers: int = 1
    exit_grid: int = 11
    exit_frames: int = 2000
    exit_block: int = 512
    exit_rate: float = 0.5
    trajectory_frames: int = 0
    flop_L: list = field(default_factory=lambda: [2, 5, 10, 15, 20])
    flop_M: list = field(default_factory=lambda: [2])
    flop_K: int = 2048
    flop_receivers: list = field(
        default_factory=lambda: ["LE-IC-Tuchler", "LE-IC-Chol", "DFE-IC-Chol", "MAP"]
    )

    # -- construction -------------------------------------------------------

    @classmethod
    def from_dict(cls, data):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigInvalid("config: top level must be a mapping")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known - {"receiver", "ebn0"}
        if unknown:
            raise ConfigInvalid(f"config: unknown field(s) {sorted(unknown)}")
        data = dict(data)
        if "receiver" in data:
            data["receivers"] = [data.pop("receiver")]
        if "ebn0" in data:
            data["ebn0_db"] = data.pop("ebn0")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigInvalid(f"config: cannot read {path}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigInvalid(f"config: parse error in {path}: {exc}") from None
        return cls.from_dict(data)

    def validate(self):
        if isinstance(self.receivers, str):
            self.receivers = [self.receivers]
        if not self.receivers:
            raise ConfigInvalid("receivers: at least one receiver required")
        for r in self.receivers:
            if r not in CAMPAIGN_RECEIVERS:
                raise ConfigInvalid(f"receivers: unknown receiver {r!r}")
        if self.constellation not in CONSTELLATIONS:
            raise ConfigInvalid(f"constellation: must be one of {CONSTELLATIONS}")
        self.ebn0_db = _parse_sweep(self.ebn0_db)
        for name in ("K_b", "min_frames", "max_frames", "workers", "exit_grid", "exit_block", "flop_K"):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 1:
                raise ConfigInvalid(f"{name}: must be a positive integer")
        for name in ("turbo_iters", "min_frame_errors", "exit_frames", "trajectory_frames", "seed"):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 0:
                raise ConfigInvalid(f"{name}: must be a nonnegative integer")
        if self.max_frames < self.min_frames:
            raise ConfigInvalid("max_frames: must be at least min_frames")
        if self.generator is not None:
            if len(self.generator) != 2:
                raise ConfigInvalid("generator: expected an octal pair such as [7, 5]")
            try:
                [int(str(g), 8) for g in self.generator]
            except ValueError:
                raise ConfigInvalid("generator: entries must be octal numbers") from None
        try:
            self.schedule()
            for t in range(self.turbo_iters + 1):
                self.schedule().beta_at(t)
                if self.schedule().self_iters_at(t) < 0:
                    raise ValueError("self_iters must be nonnegative")
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigInvalid(f"beta/self_iters: {exc!s}") from None
        self.taps()
        if self.window is not None:
            try:
                eq.WindowConfig(int(self.window["N_p"]), int(self.window["N_d"]))
            except (KeyError, TypeError, ValueError):
                raise ConfigInvalid("window: expected nonnegative N_p and N_d") from None
        for r in self.flop_receivers:
            try:
                Receiver(r)
            except ValueError:
                raise ConfigInvalid(f"flop_receivers: unknown receiver {r!r}") from None

    # -- derived objects ----------------------------------------------------

    def taps(self):
        ch = self.channel
        try:
            if isinstance(ch, str):
                if ch.lower() in ("proakis-c", "awgn"):
                    return channel_preset(ch)
                return load_taps(ch)
            arr = np.array([complex(*t) if isinstance(t, (list, tuple)) else complex(t) for t in ch])
        except (OSError, ValueError, TypeError) as exc:
            raise ConfigInvalid(f"channel: {exc}") from None
        if arr.size == 0:
            raise ConfigInvalid("channel: empty tap list")
        return arr

    def schedule(self):
        beta = self.beta
        if isinstance(beta, dict):
            beta = eq.ExpBetaSchedule(float(beta["cap"]), float(beta["scale"]))
        return eq.EpSchedule(self.turbo_iters, self.self_iters, beta)

    def window_config(self):
        if self.window is None:
            return None
        return eq.WindowConfig(int(self.window["N_p"]), int(self.window["N_d"]))

    def link(self, receiver):
        gen = tuple(self.generator) if self.generator is not None else None
        return LinkConfig(self.taps(), self.constellation, self.K_b, gen, receiver,
                          self.window_config(), self.schedule())


def _parse_sweep(spec):
    try:
        if isinstance(spec, (int, float)):
            vals = [float(spec)]
        elif isinstance(spec, dict):
            start, stop, step = float(spec["start"]), float(spec["stop"]), float(spec["step"])
            if step <= 0 or stop < start:
                raise ValueError("need step > 0 and stop >= start")
            vals = list(np.round(np.arange(start, stop + step / 2, step), 10))
        else:
            vals = [float(v) for v in spec]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigInvalid(f"ebn0_db: {exc}") from None
    if not vals:
        raise ConfigInvalid("ebn0_db: sweep is empty")
    return [float(v) for v in vals]


# ---------------------------------------------------------------------------
# BER campaign
# ---------------------------------------------------------------------------


def _one_frame(args):
    link, ebn0, seed, snr_index, frame_index = args
    return turbo_receive(link, transmit(link, ebn0, frame_rng(seed, snr_index, frame_index))).bit_errors


def _frames(link, ebn0, seed, si, workers, pool):
    """Yield per-frame error vectors in frame order."""
    f = 0
    chunk = max(1, 4 * workers)
    while True:
        args = [(link, ebn0, seed, si, f + i) for i in range(chunk)]
        results = pool.map(_one_frame, args) if pool is not None else map(_one_frame, args)
        for r in results:
            yield r
        f += chunk


def run_ber_campaign(cfg, progress=None):
    """BER/BLER per receiver, SNR point and turbo iteration.

    Returns a list of row dicts with keys ``receiver, ebn0_db, iter, ber,
    bler, frames, bit_errors, frame_errors``.  Results depend only on the
    configuration (including the seed), not on ``workers``.
    """
    rows = []
    pool = ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for receiver in cfg.receivers:
            link = cfg.link(receiver)
            for si, ebn0 in enumerate(cfg.ebn0_db):
                T = link.schedule.turbo_iters if link.trellis is not None else 0
                bit_err = np.zeros(T + 1, dtype=np.int64)
                frame_err = np.zeros(T + 1, dtype=np.int64)
                n = 0
                for errs in _frames(link, ebn0, cfg.seed, si, cfg.workers, pool):
                    bit_err += errs
                    frame_err += errs > 0
                    n += 1
                    if n >= cfg.max_frames:
                        break
                    if n >= cfg.min_frames and frame_err[-1] >= cfg.min_frame_errors:
                        break
                for t in range(T + 1):
                    rows.append(dict(receiver=receiver, ebn0_db=ebn0, iter=t,
                                     ber=bit_err[t] / (n * link.K_b), bler=frame_err[t] / n,
                                     frames=n, bit_errors=int(bit_err[t]),
                                     frame_errors=int(frame_err[t])))
                if progress:
                    progress(rows[-1])
    finally:
        if pool is not None:
            pool.shutdown()
    return rows


# ---------------------------------------------------------------------------
# EXIT, rate and FLOP campaigns
# ---------------------------------------------------------------------------


def exit_grid(n):
    return list(np.linspace(0.0, 1.0, n)) if n > 1 else ([0.0] if n == 1 else [])


def run_exit_campaign(cfg, grid=None):
    """EXIT curves and (optionally) measured turbo trajectories.

    Returns ``(curve_rows, trajectory_rows)``.
    """
    grid = exit_grid(cfg.exit_grid) if grid is None else list(grid)
    curves = []
    trajectories = []
    s0 = cfg.schedule()
    for receiver in cfg.receivers:
        for ebn0 in cfg.ebn0_db:
            if receiver != "mfb" and grid:
                pts = exit_curve(receiver, cfg.taps(), cfg.constellation, ebn0, grid,
                                 cfg.exit_frames, cfg.exit_block, cfg.exit_rate, cfg.seed,
                                 cfg.window_config(), s0.self_iters_at(0), s0.beta_at(0))
                curves += [dict(receiver=receiver, ebn0_db=ebn0, i_a=p.i_a, i_e=p.i_e) for p in pts]
            if cfg.trajectory_frames > 0 and cfg.generator is not None:
                traj = mi_trajectory(cfg.link(receiver), ebn0, cfg.trajectory_frames, cfg.seed)
                trajectories += [dict(receiver=receiver, iter=t, i_a=a, i_e=e)
                                 for t, (a, e) in enumerate(traj)]
    return curves, trajectories


def run_rate_campaign(cfg):
    """Area-theorem achievable rates from EXIT curves on an ``exit_grid`` grid."""
    curves, _ = run_exit_campaign(replace(cfg, trajectory_frames=0))
    q = constellation(cfg.constellation).q
    rows = []
    for receiver in cfg.receivers:
        for ebn0 in cfg.ebn0_db:
            pts = [r for r in curves if r["receiver"] == receiver and r["ebn0_db"] == ebn0]
            curve = [ExitPoint(r["i_a"], r["i_e"]) for r in pts]
            rows.append(dict(receiver=receiver, ebn0_db=ebn0, rate=achievable_rate(curve, q)))
    return rows


def run_flop_report(cfg):
    """Analytic FLOPs per symbol, relative to the first listed receiver."""
    rows = []
    base = cfg.flop_receivers[0]
    for L in cfg.flop_L:
        N = 3 * L + 2
        for M in cfg.flop_M:
            ref = flop_count(base, L, N, M, cfg.flop_K)
            for r in cfg.flop_receivers:
                val = flop_count(r, L, N, M, cfg.flop_K)
                rows.append(dict(receiver=r, L=L, M=M, flops_per_symbol=val / cfg.flop_K,
                                 ratio=val / ref))
    return rows


def measure_flops(receiver, L, M, K, seed=0):
    """FLOPs counted by the instrumented kernels on one random frame.

    ``receiver`` is ``"LE-IC-Chol"`` or ``"DFE-IC-Chol"``.  The LE-IC
    demapper runs outside the kernel in vectorized form; its cost is added
    from the same per-symbol count the kernel uses for DFE receivers.
    """
    names = {"LE-IC-Chol": "le-ic", "DFE-IC-Chol": "dfe-ic-ep"}
    rng = np.random.default_rng(seed)
    h = rng.standard_normal(L) + 1j * rng.standard_normal(L)
    h /= np.linalg.norm(h)
    c = constellation({2: "bpsk", 4: "qpsk", 8: "8psk", 16: "16qam"}[M])
    ch = ChannelModel.static(h, K, 0.1)
    bits = rng.integers(0, 2, K * c.q)
    y = apply_channel(c.map_bits(bits), ch, rng)
    La = rng.standard_normal((K, c.q))
    counter = FlopCounter()
    eq.equalize(names[receiver], eq.Frame(y, ch.taps, 0.1, c), La, counter=counter)
    ops = counter.real_ops
    if receiver == "LE-IC-Chol":
        ops += K * (3 * M * c.q + 22 * M)
    return 0.5 * ops


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def write_csv(rows, columns, kind, out=None):
    """Write rows with a versioned comment header; returns the text."""
    buf = io.StringIO()
    buf.write(f"# {CSV_VERSION} {kind}\n")
    w = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in r.items()})
    text = buf.getvalue()
    if out is not None:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    return text


BER_COLUMNS = ["receiver", "ebn0_db", "iter", "ber", "bler", "frames", "bit_errors", "frame_errors"]
EXIT_COLUMNS = ["receiver", "ebn0_db", "i_a", "i_e"]
TRAJ_COLUMNS = ["receiver", "iter", "i_a", "i_e"]
RATE_COLUMNS = ["receiver", "ebn0_db", "rate"]
FLOP_COLUMNS = ["receiver", "L", "M", "flops_per_symbol", "ratio"]
