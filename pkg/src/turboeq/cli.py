"""
Command line front end.

    turboeq ber      --config cfg.yaml [--receiver R] [--ebn0 7] [--out ber.csv]
    turboeq exit     --config cfg.yaml [--out exit.csv]
    turboeq rate     --config cfg.yaml [--out rate.csv]
    turboeq flops    [--config cfg.yaml] [--out flops.csv]
    turboeq selftest

Exit status: 0 on success, 2 for configuration errors, 3 for numerical
failures.
"""

import argparse
import sys

import numpy as np

from .harness import (
    BER_COLUMNS,
    EXIT_COLUMNS,
    FLOP_COLUMNS,
    RATE_COLUMNS,
    TRAJ_COLUMNS,
    CampaignConfig,
    ConfigInvalid,
    run_ber_campaign,
    run_exit_campaign,
    run_flop_report,
    run_rate_campaign,
    write_csv,
)
from .mapping import DegeneratePmf
from .numerics import NotPositiveDefinite

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigInvalid(message)


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def _int_list(text):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None
    return vals[0] if len(vals) == 1 else vals


def build_parser():
    p = _Parser(prog="turboeq", description="Turbo equalization simulator")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in [
        ("ber", "Monte Carlo BER/BLER sweep"),
        ("exit", "EXIT curves and turbo trajectories"),
        ("rate", "area-theorem achievable rates"),
        ("flops", "analytic complexity report"),
        ("selftest", "quick numerical self checks"),
    ]:
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", help="YAML or JSON campaign file")
        s.add_argument("--seed", type=int)
        s.add_argument("--receiver", help="receiver name or comma list")
        s.add_argument("--ebn0", type=_float_list, help="Eb/N0 in dB, comma list")
        s.add_argument("--iters", type=int, help="turbo iterations T")
        s.add_argument("--self-iters", type=_int_list, help="self-iterations (int or per-iteration list)")
        s.add_argument("--beta", type=float, help="static damping factor")
        s.add_argument("--out", help="output CSV path (stdout when omitted)")
    return p


def _config(args):
    data = {}
    if args.config:
        base = CampaignConfig.load(args.config)
        data = {k: getattr(base, k) for k in base.__dataclass_fields__}
    if args.seed is not None:
        data["seed"] = args.seed
    if args.receiver:
        data["receivers"] = [r.strip() for r in args.receiver.split(",")]
    if args.ebn0:
        data["ebn0_db"] = args.ebn0
    if args.iters is not None:
        data["turbo_iters"] = args.iters
    if args.self_iters is not None:
        data["self_iters"] = args.self_iters
    if args.beta is not None:
        data["beta"] = args.beta
    return CampaignConfig.from_dict(data)


def selftest(out=sys.stdout):
    """Small oracle checks of the engine, decoder and equalizer; True if all pass."""
    from .decoder import bcjr_decode, brute_force_decode
    from .equalizer import Frame, WindowConfig, run_le_ic, fir_estimate, IcVectors
    from .mapping import constellation
    from .numerics import WindowedCovSpec, chol_init, chol_slide_le
    from .txchain import ChannelModel, apply_channel, rsc_encode, window_channel

    rng = np.random.default_rng(0)
    ok = True

    # sliding factor vs fresh factorization
    h = np.array([0.5, 1.0, 0.3j])
    K, win = 40, WindowConfig(2, 4)
    ch = ChannelModel.static(h, K, 0.1)
    v = rng.uniform(0, 1, K + 20)
    W = win.N_pp(3) + win.N_d + 1

    def vk(k):
        return np.array([v[x + 10] if 0 <= x < K else 0.0 for x in range(k - win.N_pp(3), k + win.N_d + 1)])

    f = chol_init(WindowedCovSpec(0.1, window_channel(ch, 0, 2, 4), vk(0)))
    err = 0.0
    for k in range(1, K):
        f = chol_slide_le(f, 0.1, window_channel(ch, k - 1, 2, 4), window_channel(ch, k, 2, 4),
                          vk(k - 1), vk(k)[-1])
        S = WindowedCovSpec(0.1, window_channel(ch, k, 2, 4), vk(k)).covariance()
        err = max(err, np.abs(f.covariance() - S).max() / np.abs(S).max())
    ok &= _report(out, "cholesky slide vs fresh factorization", err, 1e-9)

    # BCJR vs enumeration
    u = rng.integers(0, 2, 8)
    La = (1 - 2 * rsc_encode(u)) * 1.5 + rng.standard_normal(20)
    err = np.abs(bcjr_decode(La)[0] - brute_force_decode(La, 8)).max()
    ok &= _report(out, "bcjr vs brute force", err, 1e-6)

    # LE-IC vs single-window direct estimate
    c = constellation("qpsk")
    chq = ChannelModel.static(h, 30, 0.2)
    x = c.points[rng.integers(0, 4, 30)]
    y = apply_channel(x, chq, rng)
    res = run_le_ic(Frame(y, chq.taps, 0.2, c), None, win)
    k = 15
    rows = np.array([y[n] if 0 <= n < y.size else 0 for n in range(k - 2, k + 5)])
    d = fir_estimate(rows, window_channel(chq, k, 2, 4), IcVectors(np.zeros(W), np.ones(W)),
                     1.0, 0.2, win.N_pp(3))
    err = abs(d.mean - res.xe[k]) + abs(d.variance - res.ve[k])
    ok &= _report(out, "le-ic kernel vs direct estimate", err, 1e-9)
    return ok


def _report(out, name, err, tol):
    passed = bool(err <= tol)
    print(f"{'PASS' if passed else 'FAIL'}  {name}: error {err:.3e} (tol {tol:g})", file=out)
    return passed


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.command == "selftest":
            return EXIT_OK if selftest() else EXIT_NUMERIC
        cfg = _config(args)
        if args.command == "ber":
            text = write_csv(run_ber_campaign(cfg), BER_COLUMNS, "ber", args.out)
        elif args.command == "exit":
            curves, traj = run_exit_campaign(cfg)
            text = write_csv(curves, EXIT_COLUMNS, "exit", args.out)
            if traj:
                tpath = None if args.out is None else _sibling(args.out, "_trajectory")
                text += write_csv(traj, TRAJ_COLUMNS, "trajectory", tpath)
        elif args.command == "rate":
            text = write_csv(run_rate_campaign(cfg), RATE_COLUMNS, "rate", args.out)
        else:
            text = write_csv(run_flop_report(cfg), FLOP_COLUMNS, "flops", args.out)
        if args.out is None:
            sys.stdout.write(text)
        return EXIT_OK
    except ConfigInvalid as exc:
        print(f"turboeq: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NotPositiveDefinite, DegeneratePmf, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"turboeq: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def _sibling(path, suffix):
    stem, dot, ext = path.rpartition(".")
    return f"{stem}{suffix}.{ext}" if dot else f"{path}{suffix}"


if __name__ == "__main__":
    sys.exit(main())
