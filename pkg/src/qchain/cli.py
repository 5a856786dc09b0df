"""Command-line interface.

Subcommands: map, sweep, hysteresis, two-seed, pulse, eigenmodes,
telegraph-gen, adr, plot, validate-config.  Exit codes: 0 success,
1 usage error, 2 configuration error, 3 numeric failure.  Every run
writes its artifacts plus a JSON manifest (config hash, seed, command,
artifact list with digests) into the output directory, which is taken
from --output-dir, else the QCHAIN_OUTPUT_DIR environment variable,
else the current directory.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import io as qio
from . import sweeps, telegraph
from .config import ConfigError, RunConfig, default_config, load_config
from .engine import DivergenceError
from .observables import chain_eigenmodes
from .params import ParameterError

TWO_PI = 2.0 * math.pi

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

ENV_OUTPUT_DIR = "QCHAIN_OUTPUT_DIR"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems via exception, not sys.exit."""

    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="qchain", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI configuration file")
        p.add_argument("--output-dir", help="artifact directory "
                       f"(default: ${ENV_OUTPUT_DIR} or cwd)")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel worker processes for map cells")

    p = sub.add_parser("map", help="frequency x power steady-state map")
    common(p)
    p.add_argument("--protocol", choices=sweeps._PROTOCOLS,
                   help="override the configured cell protocol")

    p = sub.add_parser("sweep", help="directional power sweep at one frequency")
    common(p)
    p.add_argument("--freq", type=float, help="drive frequency in Hz "
                   "(default: [drive] freq)")
    p.add_argument("--direction", choices=("up", "down"), default=None)

    p = sub.add_parser("hysteresis", help="up-minus-down sweep difference map")
    common(p)

    p = sub.add_parser("two-seed", help="vacuum-minus-excited seed difference map")
    common(p)

    p = sub.add_parser("pulse", help="single point prepared by a drive ramp")
    common(p)
    p.add_argument("--freq", type=float, help="drive frequency in Hz")
    p.add_argument("--xi", type=float, help="measurement amplitude in Hz "
                   "(default: [drive] epsilon)")
    p.add_argument("--pulse", choices=("up", "down"), default=None)

    p = sub.add_parser("eigenmodes", help="bare-chain normal modes")
    common(p)

    p = sub.add_parser("telegraph-gen", help="synthetic two-state switching traces")
    common(p)

    p = sub.add_parser("adr", help="switching rates + asymptotic decay rate "
                       "from trace files")
    common(p)
    p.add_argument("traces", nargs="+", help="trace files (one drive condition)")
    p.add_argument("--channel", choices=(telegraph.CHANNEL_AMPLITUDE,
                                         telegraph.CHANNEL_PHASE,
                                         telegraph.CHANNEL_AUTO),
                   default=telegraph.CHANNEL_AUTO)
    p.add_argument("--fit", choices=(telegraph.FIT_MLE, telegraph.FIT_HISTOGRAM),
                   default=telegraph.FIT_MLE)

    p = sub.add_parser("plot", help="render a stored artifact as SVG")
    common(p)
    p.add_argument("artifact", help="grid, difference, or trace file")
    p.add_argument("--out", help="output SVG path (default: artifact name .svg)")

    p = sub.add_parser("validate-config", help="parse and validate a config file")
    common(p)

    return parser


# ---------------------------------------------------------------- helpers

def _load(args) -> RunConfig:
    if args.config is not None:
        return load_config(args.config)
    return default_config()


def _outdir(args) -> Path:
    target = args.output_dir or os.environ.get(ENV_OUTPUT_DIR) or "."
    path = Path(target)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _seed(args, cfg: RunConfig) -> int:
    return args.seed if args.seed is not None else cfg.sweep["seed"]


def _axes(cfg: RunConfig) -> tuple[np.ndarray, np.ndarray]:
    s = cfg.sweep
    freqs = np.linspace(s["freq_min"], s["freq_max"], s["n_freqs"])
    powers = np.geomspace(s["power_min"], s["power_max"], s["n_powers"])
    return freqs, powers


def _finish(args, cfg: RunConfig, seed: int, outdir: Path, artifacts: list) -> int:
    manifest = qio.make_manifest(
        command=" ".join(sys.argv[1:]) if sys.argv[1:] else args.command,
        config_text=cfg.source_text, seed=seed, artifacts=artifacts,
    )
    mpath = outdir / f"{args.command.replace('-', '_')}_manifest.json"
    manifest.write(mpath)
    for p in artifacts + [mpath]:
        print(f"wrote {p}")
    return EXIT_OK


# ---------------------------------------------------------------- subcommands

def _cmd_map(args) -> int:
    cfg = _load(args)
    seed = _seed(args, cfg)
    outdir = _outdir(args)
    freqs, powers = _axes(cfg)
    protocol = args.protocol or cfg.sweep["protocol"]
    grid = sweeps.frequency_power_map(
        cfg.params, freqs, powers, protocol,
        integrator_options=cfg.integrator_options(), seed=seed, jobs=args.jobs,
    )
    path = outdir / "map_grid.txt"
    qio.write_grid(path, grid)
    return _finish(args, cfg, seed, outdir, [path])


def _cmd_sweep(args) -> int:
    cfg = _load(args)
    seed = _seed(args, cfg)
    outdir = _outdir(args)
    _, powers = _axes(cfg)
    freq = TWO_PI * args.freq if args.freq is not None else cfg.drive["freq"]
    direction = args.direction or cfg.drive["direction"]
    cells = sweeps.power_sweep(
        cfg.params, freq, powers, direction,
        integrator_options=cfg.integrator_options(), seed=seed,
    )
    grid = sweeps.SweepGrid(
        freqs=np.array([freq]), powers=powers, cells=[cells],
        protocol=(sweeps.PROTOCOL_SWEEP_UP if direction == "up"
                  else sweeps.PROTOCOL_SWEEP_DOWN),
        params=cfg.params,
    )
    sweeps._apply_reference(grid)
    path = outdir / f"sweep_{direction}.txt"
    qio.write_grid(path, grid)
    return _finish(args, cfg, seed, outdir, [path])


def _cmd_difference(args, kind: str) -> int:
    cfg = _load(args)
    seed = _seed(args, cfg)
    outdir = _outdir(args)
    freqs, powers = _axes(cfg)
    opts = cfg.integrator_options()
    if kind == "hysteresis":
        hyst = sweeps.hysteresis_map(cfg.params, freqs, powers,
                                     integrator_options=opts, seed=seed,
                                     jobs=args.jobs)
        labels = ("sweep_up", "sweep_down")
    else:
        hyst = sweeps.two_seed_map(cfg.params, freqs, powers,
                                   integrator_options=opts, seed=seed,
                                   jobs=args.jobs)
        labels = ("seed_vacuum", "seed_excited")
    stem = kind.replace("-", "_")
    paths = [outdir / f"{stem}_{labels[0]}.txt",
             outdir / f"{stem}_{labels[1]}.txt",
             outdir / f"{stem}_difference.txt"]
    qio.write_grid(paths[0], hyst.grid_a)
    qio.write_grid(paths[1], hyst.grid_b)
    qio.write_difference(paths[2], hyst, labels[0], labels[1])
    n_hyst = len(hyst.hysteretic_cells())
    print(f"{n_hyst} cells with |difference| > 3 dB")
    return _finish(args, cfg, seed, outdir, paths)


def _cmd_pulse(args) -> int:
    cfg = _load(args)
    seed = _seed(args, cfg)
    outdir = _outdir(args)
    freq = TWO_PI * args.freq if args.freq is not None else cfg.drive["freq"]
    xi = TWO_PI * args.xi if args.xi is not None else cfg.drive["epsilon"]
    pulse = args.pulse or cfg.drive["pulse"]
    result = sweeps.pulse_initialized_point(
        cfg.params, freq, xi, pulse,
        integrator_options=cfg.integrator_options(),
    )
    cell = sweeps._summarize(freq, xi, result)
    grid = sweeps.SweepGrid(
        freqs=np.array([freq]), powers=np.array([max(xi, 1e-30)]),
        cells=[[cell]], protocol=sweeps.PROTOCOL_FRESH, params=cfg.params,
    )
    sweeps._apply_reference(grid)
    path = outdir / f"pulse_{pulse}.txt"
    qio.write_grid(path, grid)
    print(f"classification {cell.classification} ratio {cell.ratio:.6e}")
    return _finish(args, cfg, seed, outdir, [path])


def _cmd_eigenmodes(args) -> int:
    cfg = _load(args)
    seed = _seed(args, cfg)
    outdir = _outdir(args)
    modes = chain_eigenmodes(cfg.params)
    path = outdir / "eigenmodes.txt"
    qio.write_eigenmodes(path, modes.frequencies, modes.weights, cfg.params)
    span = (modes.frequencies.max() - modes.frequencies.min()) / TWO_PI
    print(f"{modes.frequencies.size} modes, band span {span / 1e6:.1f} MHz")
    return _finish(args, cfg, seed, outdir, [path])


def _cmd_telegraph_gen(args) -> int:
    cfg = _load(args)
    seed = _seed(args, cfg)
    outdir = _outdir(args)
    t = cfg.telegraph
    rates = telegraph.RatePair(gamma_12=t["gamma_12"], gamma_21=t["gamma_21"])
    noise = telegraph.NoiseSpec(
        level_means=((t["amp_low"], t["phase_low"]),
                     (t["amp_high"], t["phase_high"])),
        gaussian_sigma=t["noise_sigma"],
    )
    paths = []
    for k in range(t["n_traces"]):
        trace = telegraph.simulate_telegraph(
            rates, t["duration"], t["dt"], noise=noise,
            filter_cutoff=t["filter_cutoff"],
            seed=seed + k,
        )
        trace.meta.update({
            "seed": str(seed + k),
            "true_gamma_12": repr(t["gamma_12"]),
            "true_gamma_21": repr(t["gamma_21"]),
        })
        path = outdir / f"trace_{k:03d}.txt"
        qio.write_trace(path, trace)
        paths.append(path)
    return _finish(args, cfg, seed, outdir, paths)


def _cmd_adr(args) -> int:
    cfg = _load(args)
    seed = _seed(args, cfg)
    outdir = _outdir(args)
    traces = [qio.read_trace(p) for p in args.traces]
    estimate = telegraph.estimate_adr(traces, channel=args.channel,
                                      fit_mode=args.fit)
    path = outdir / "adr_report.txt"
    qio.write_adr_report(path, estimate)
    if isinstance(estimate, telegraph.MonostablePoint):
        print("monostable: no bimodal switching detected")
    else:
        print(f"gamma_12 {estimate.rates.gamma_12:.4g} 1/s "
              f"[{estimate.censoring[0]}]  "
              f"gamma_21 {estimate.rates.gamma_21:.4g} 1/s "
              f"[{estimate.censoring[1]}]  "
              f"adr {estimate.adr:.4g} 1/s  channel {estimate.channel}")
    return _finish(args, cfg, seed, outdir, [path])


def _cmd_plot(args) -> int:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    cfg = _load(args)
    seed = _seed(args, cfg)
    outdir = _outdir(args)
    src = Path(args.artifact)
    meta, _, _ = qio._read_lines(src)
    kind = meta.get("kind")
    out = Path(args.out) if args.out else outdir / (src.stem + ".svg")

    fig, ax = plt.subplots(figsize=(7, 5))
    if kind == "grid":
        grid = qio.read_grid(src)
        matrix = grid.transmission_matrix()
        mesh = ax.pcolormesh(grid.freqs / TWO_PI / 1e9,
                             grid.powers / TWO_PI,
                             matrix.T, shading="nearest", cmap="viridis")
        ax.set_yscale("log")
        ax.set_xlabel("drive frequency [GHz]")
        ax.set_ylabel("drive amplitude [Hz]")
        fig.colorbar(mesh, ax=ax, label="transmission [dB]")
    elif kind == "difference":
        freqs, powers, diff = qio.read_difference(src)
        vmax = np.nanmax(np.abs(diff)) if np.isfinite(diff).any() else 1.0
        mesh = ax.pcolormesh(freqs / TWO_PI / 1e9, powers / TWO_PI, diff.T,
                             shading="nearest", cmap="RdBu_r",
                             vmin=-vmax, vmax=vmax)
        ax.set_yscale("log")
        ax.set_xlabel("drive frequency [GHz]")
        ax.set_ylabel("drive amplitude [Hz]")
        fig.colorbar(mesh, ax=ax, label="difference [dB]")
    elif kind == "trace":
        trace = qio.read_trace(src)
        amp, phase = telegraph.homodyne_from_iq(trace.i_samples, trace.q_samples)
        picked = telegraph.select_channel(trace)
        samples = amp
        if picked is not None and picked[0] == telegraph.CHANNEL_PHASE:
            samples = phase
        t = trace.dt * np.arange(samples.size)
        ax.plot(t, samples, lw=0.5)
        if picked is not None:
            ax.axhline(picked[1], color="k", ls="--", label="threshold")
            ax.legend()
        ax.set_xlabel("time [s]")
        ax.set_ylabel("homodyne signal")
    else:
        raise qio.FormatError(f"{src}: no plot style for kind {kind!r}")
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)
    return _finish(args, cfg, seed, outdir, [out])


def _cmd_validate_config(args) -> int:
    if args.config is None:
        raise _UsageError("validate-config requires --config")
    cfg = load_config(args.config)
    print(f"ok: {cfg.params.n_sites} sites, "
          f"config hash {qio.text_digest(cfg.source_text)[:12]}")
    return EXIT_OK


_COMMANDS = {
    "map": _cmd_map,
    "sweep": _cmd_sweep,
    "hysteresis": lambda a: _cmd_difference(a, "hysteresis"),
    "two-seed": lambda a: _cmd_difference(a, "two-seed"),
    "pulse": _cmd_pulse,
    "eigenmodes": _cmd_eigenmodes,
    "telegraph-gen": _cmd_telegraph_gen,
    "adr": _cmd_adr,
    "plot": _cmd_plot,
    "validate-config": _cmd_validate_config,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, qio.FormatError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ParameterError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
