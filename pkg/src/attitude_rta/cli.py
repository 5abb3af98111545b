"""Command-line entry point.

Modes::

    episode    run one episode; write trajectory.csv, episode.json and plots/
    campaign   Monte-Carlo campaign; write campaign.json
    calibrate  search the barrier tuning; write tuning.json
    check      validate the config and run a 10-step smoke episode

Verbosity comes from the ``RTA_LOG_LEVEL`` environment variable.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .barriers import CONSTRAINT_IDS
from .config import Config, ConfigError, dumps, load_tuning, parse_config
from .harness import calibrate_tuning, run_campaign, run_episode
from .outputs import emit_plot_data, episode_dict, write_campaign_json, write_json, write_trajectory_csv

log = logging.getLogger("attitude_rta")

MODES = ("episode", "campaign", "calibrate", "check")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="attitude-rta", description=__doc__.split("\n")[0])
    ap.add_argument("--config", type=Path, help="JSON config file (defaults apply to omitted keys)")
    ap.add_argument("--mode", choices=MODES, default="episode")
    ap.add_argument("--seed", type=int, help="root seed (episode sampling, campaign, calibration)")
    ap.add_argument("--n", type=int, help="number of episodes (campaign, calibrate)")
    ap.add_argument("--workers", type=int, help="worker processes for campaigns")
    ap.add_argument("--no-rta", action="store_true", help="disable the safety filter")
    ap.add_argument("--slack", help="comma-separated constraint ids to slack, or 'none'")
    ap.add_argument("--tuning", type=Path, help="tuning file written by --mode calibrate")
    ap.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    return ap


def _slack_list(text: str) -> tuple[str, ...]:
    if text.strip().lower() == "none":
        return ()
    ids = tuple(s.strip() for s in text.split(",") if s.strip())
    for cid in ids:
        if cid not in CONSTRAINT_IDS:
            raise ConfigError("--slack", f"unknown constraint {cid!r}; choose from {', '.join(CONSTRAINT_IDS)}")
    return ids


def apply_overrides(cfg: Config, args: argparse.Namespace) -> Config:
    params = cfg.params
    if args.tuning is not None:
        params = params.with_tuning(load_tuning(args.tuning))
    fcfg = cfg.filter
    if args.slack is not None:
        slacked = _slack_list(args.slack)
        if fcfg.enabled and set(fcfg.enabled) <= set(slacked):
            raise ConfigError("--slack", "slack may not cover every enabled constraint")
        fcfg = replace(fcfg, slacked=slacked)
    ep = replace(cfg.episode, filter_config=fcfg)
    if args.no_rta:
        ep = replace(ep, rta_enabled=False)
    if args.seed is not None:
        ep = replace(ep, seed=args.seed)
    camp = cfg.campaign
    template = replace(camp.template, filter_config=fcfg, rta_enabled=ep.rta_enabled)
    camp = replace(camp, template=template,
                   seed=camp.seed if args.seed is None else args.seed,
                   n=camp.n if args.n is None else args.n,
                   workers=camp.workers if args.workers is None else args.workers)
    if camp.n < 1:
        raise ConfigError("--n", "must be >= 1")
    if camp.workers < 1:
        raise ConfigError("--workers", "must be >= 1")
    return Config(params, fcfg, ep, camp)


def _episode(cfg: Config, out: Path) -> int:
    res = run_episode(cfg.episode, cfg.params)
    write_trajectory_csv(res, out / "trajectory.csv")
    write_json(episode_dict(res), out / "episode.json")
    emit_plot_data(res, out / "plots", cfg.params)
    print(f"episode: {'passed' if res.passed else 'FAILED'}; violated={list(res.violated)}; "
          f"intervention rate {res.intervention_rate:.3f}; wrote {out}")
    return 0


def _campaign(cfg: Config, out: Path) -> int:
    c = cfg.campaign
    summary = run_campaign(c.n, c.ranges, c.template, c.seed, cfg.params, workers=c.workers,
                           progress=lambda e: log.info("episode %d %s", e.index, "ok" if e.passed else e.violated))
    write_campaign_json(summary, out / "campaign.json")
    print(f"campaign: success rate {summary.success_rate:.4f} over {summary.n_episodes} episodes; "
          f"wrote {out / 'campaign.json'}")
    return 0


def _calibrate(cfg: Config, out: Path, args) -> int:
    c = cfg.campaign
    res = calibrate_tuning(cfg.params, seed=c.seed, n_episodes=args.n or 50,
                           template=replace(c.template, ranges=c.ranges))
    write_json({"tuning": res.tuning.to_dict(), "violations": res.violations,
                "converged": res.converged, "evaluations": res.evaluations,
                "seed": c.seed, "nEpisodes": args.n or 50}, out / "tuning.json")
    print(f"calibrate: {'converged' if res.converged else 'NOT converged'} "
          f"({res.violations} failing episodes); wrote {out / 'tuning.json'}")
    return 0 if res.converged else 1


def _check(cfg: Config) -> int:
    ep = replace(cfg.episode, duration=10 * cfg.episode.dt)
    res = run_episode(ep, cfg.params)
    finite = bool(np.all(np.isfinite(res.states)))
    ok = res.passed and finite
    print(f"check: config ok; 10-step smoke episode {'passed' if ok else 'FAILED'}"
          + ("" if ok else f" (violated={list(res.violated)} {res.diagnostic})"))
    return 0 if ok else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = os.environ.get("RTA_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = apply_overrides(parse_config(args.config), args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    log.debug("effective config:\n%s", dumps(cfg))
    try:
        if args.mode == "check":
            return _check(cfg)
        args.out.mkdir(parents=True, exist_ok=True)
        if args.mode == "episode":
            return _episode(cfg, args.out)
        if args.mode == "campaign":
            return _campaign(cfg, args.out)
        return _calibrate(cfg, args.out, args)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
