"""Command-line entry point."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__, kernels
from .channel import ChannelConfig, link_budget, noise_floor
from .config import load_config
from .engine import run_campaign
from .metrics_io import summarize, write_report
from .phy import ConfigurationError
from .scenario import LinkClass, LinkKind, deploy_scenario, dump_scenario_csv

log = logging.getLogger("cv2xsim")


def _probe(distance: float, kind: str) -> str:
    link = LinkClass(LinkKind(kind), (0,) if kind == LinkKind.NLOS_TRUCK.value else ())
    cfg = ChannelConfig()
    b = link_budget(distance, link, 23.0, cfg)
    return (f"distance_m={distance:.6g} class={kind} path_loss_db={b.path_loss_db:.6g} "
            f"blockage_db={b.blockage_loss_db:.6g} rx_dbm={b.rx_power_dbm:.6g} "
            f"noise_dbm={noise_floor(cfg):.6g} snr_db={b.sinr_db:.6g}")


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.mcs is not None:
        cfg = cfg.with_mcs(args.mcs)
    if args.cc_mode is not None:
        cfg = cfg.with_cc_mode(args.cc_mode)
    if args.seeds is not None:
        cfg = cfg.with_seeds(range(args.seed_offset, args.seed_offset + args.seeds))
    cfg.sim.validate(cfg.mac.sps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.dump_scenario:
        dump_scenario_csv(deploy_scenario(replace(cfg.scenario, rng_seed=cfg.sim.seeds[0])), args.dump_scenario)

    log.info("backend=%s mcs=%d seeds=%d cc=%s", kernels.BACKEND, cfg.sim.mcs_index,
             len(cfg.sim.seeds), cfg.mac.cc.mode.value)
    reports, logs = run_campaign(cfg.scenario, cfg.sim, cfg.channel, cfg.mac, keep_logs=args.event_log)
    for seed, ev in zip(cfg.sim.seeds, logs):
        ev.write(out / f"events_seed{seed}.csv.gz")
    agg = summarize(reports)
    write_report(agg, out)
    s = agg.summary()
    print(f"vehicles={s['vehicles']} frac_pdr_gt_0.9={s['fraction_pdr_above_0.9']:.4f} "
          f"min_pdr={s['min_pdr']:.4f} mean_latency_ms={s['mean_latency_ms']:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cv2xsim", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--channel-probe", nargs=2, metavar=("DISTANCE_M", "CLASS"),
                   help="print the link budget for one link and exit; CLASS is "
                        + ", ".join(k.value for k in LinkKind))
    p.add_argument("--dump-scenario", metavar="CSV", help="deploy with --seed and write node positions")
    p.add_argument("--config", help="YAML config (default: bundled)")
    p.add_argument("--seed", type=int, default=0)
    sub = p.add_subparsers(dest="command")

    r = sub.add_parser("run", help="run a seed campaign and write reports")
    r.add_argument("--config", help="YAML config (default: bundled)")
    r.add_argument("--seeds", type=int, help="number of seeds (overrides the config list)")
    r.add_argument("--seed-offset", type=int, default=0)
    r.add_argument("--mcs", type=int)
    r.add_argument("--out", required=True)
    r.add_argument("--cc-mode", choices=("off", "drop", "power"))
    r.add_argument("--event-log", action="store_true", help="also write gzip CSV event logs")
    r.add_argument("--dump-scenario", metavar="CSV", help="write the first seed's deployment")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.channel_probe:
            d, kind = args.channel_probe
            print(_probe(float(d), kind))
            return 0
        if args.command == "run":
            return cmd_run(args)
        if args.dump_scenario:
            cfg = load_config(args.config)
            dump_scenario_csv(deploy_scenario(replace(cfg.scenario, rng_seed=args.seed)), args.dump_scenario)
            return 0
    except (ConfigurationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    build_parser().print_help()
    return 1


if __name__ == "__main__":
    sys.exit(main())
