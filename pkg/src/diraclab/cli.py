"""Config-driven batch front end.

Subcommands: verify-algebra, simulate, verify-estimate, cross-validate,
report.  Settings come from an INI file plus --section.key=value
overrides; every output file carries the config fingerprint in a header
comment, and identical config + seed reruns produce identical files.

Exit codes: 0 pass, 1 verification failure, 2 solver blowup, 64 usage or
config error.
"""

from __future__ import annotations

import configparser
import os
import re
import sys
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .clifford import (
    GridSpec,
    SpinorField3D,
    dirac_square_check,
    radial_profile_field,
    random_band_limited,
    verify_algebra,
)
from .clifford import h1_norm, l2_norm
from .norms import ESTIMATES, InadmissiblePotential, UnknownEstimate, verify_estimate
from .partialwave import (
    QuantumNumbers,
    RadialSpinorState,
    SectorProfile,
    cross_validate,
    evolve_radial,
    sector_h1,
    sector_l2,
)
from .potential import PotentialSpec
from .propagator import (
    CubicNonlinearity,
    EvolutionConfig,
    SolverBlowup,
    evolve,
    write_norm_log,
    write_trajectory,
)
from .util import config_fingerprint, file_digest, fmt_number, write_csv

USAGE_EXIT = 64
BLOWUP_EXIT = 2
OUTPUT_ENV = "DIRACLAB_OUT"

DEFAULTS: dict[str, dict[str, str]] = {
    "grid": {"n": "48", "L": "16.0"},
    "evolution": {
        "dt": "0.05",
        "t_final": "5.0",
        "record_dt": "0.25",
        "scheme": "strang",
        "dt_radial": "0.0125",
        "support_radius": "",
        "blowup_factor": "1e6",
    },
    "potential": {
        "kind": "default",
        "amplitude1": "0.05",
        "amplitude2": "0.0",
        "r0": "2.0",
        "width": "1.0",
        "delta": "0.05",
        "sigma": "1.5",
        "eps": "0.1",
        "table": "",
    },
    "nonlinearity": {"kind": "beta_form"},
    "data": {
        "family": "radial_bump",
        "amplitude": "1.0",
        "r0": "1.0",
        "width": "1.6",
        "freq": "0.0",
        "kmax_frac": "0.33",
        "kappa": "1",
        "n_r": "512",
        "normalize": "none",
        "seed": "7",
    },
    "ensemble": {"size": "20", "seed": "7"},
    "estimate": {
        "id": "homdir",
        "cap": "50.0",
        "refine": "true",
        "angular_p": "8.0",
        "s_omega": "",
    },
    "cross": {"threshold": "1e-3", "t_final": "1.0"},
    "algebra": {
        "tolerance": "1e-15",
        "square_tolerance": "1e-12",
        "square_n": "32",
        "square_fields": "50",
    },
    "simulate": {"snapshots": "false"},
    "output": {"dir": "runs"},
}

COMMANDS = ("verify-algebra", "simulate", "verify-estimate",
            "cross-validate", "report")

_FLAG = re.compile(r"^--([a-z]+)\.([a-z_0-9]+)=(.*)$")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Effective settings for one command, after file and flag overrides."""

    command: str
    sections: "OrderedDict[str, OrderedDict[str, str]]"
    flag_keys: frozenset = frozenset()
    file_keys: frozenset = frozenset()

    def get(self, section: str, key: str) -> str:
        return self.sections[section][key]

    def getint(self, section: str, key: str) -> int:
        return int(self.get(section, key))

    def getfloat(self, section: str, key: str) -> float:
        return float(self.get(section, key))

    def getbool(self, section: str, key: str) -> bool:
        v = self.get(section, key).strip().lower()
        if v in ("true", "yes", "1", "on"):
            return True
        if v in ("false", "no", "0", "off"):
            return False
        raise UsageError(f"{section}.{key}: expected a boolean, got {v!r}")

    def to_dict(self) -> dict:
        return {"command": self.command,
                **{s: dict(kv) for s, kv in self.sections.items()}}

    def fingerprint(self) -> str:
        # where the files land has no bearing on what gets computed
        d = self.to_dict()
        d.pop("output")
        return config_fingerprint(d)

    def grid(self) -> GridSpec:
        return GridSpec(n=self.getint("grid", "n"), L=self.getfloat("grid", "L"))

    def out_dir(self) -> Path:
        # flag beats the environment, which beats the config file
        key = ("output", "dir")
        env = os.environ.get(OUTPUT_ENV)
        if key in self.flag_keys or not env:
            d = Path(self.get(*key))
        else:
            d = Path(env)
        d.mkdir(parents=True, exist_ok=True)
        return d


def parse_args(argv) -> RunConfig:
    args = list(argv)
    if not args or args[0] in ("-h", "--help"):
        raise UsageError(_usage())
    command = args.pop(0)
    if command not in COMMANDS:
        raise UsageError(f"unknown command {command!r}; expected one of "
                         + ", ".join(COMMANDS))
    sections = OrderedDict(
        (s, OrderedDict(kv.items())) for s, kv in DEFAULTS.items())
    config_path = None
    overrides = []
    it = iter(args)
    for a in it:
        if a == "--config":
            config_path = next(it, None)
            if config_path is None:
                raise UsageError("--config needs a file path")
            continue
        m = _FLAG.match(a)
        if m is None:
            raise UsageError(f"unrecognized argument {a!r}; flags look like "
                             "--section.key=value")
        overrides.append(m.groups())
    file_keys = set()
    if config_path is not None:
        cp = configparser.ConfigParser()
        read = cp.read(config_path)
        if not read:
            raise UsageError(f"config file {config_path!r} not readable")
        for s in cp.sections():
            if s not in sections:
                raise UsageError(f"unknown config section [{s}]")
            for k, v in cp.items(s):
                if k not in sections[s]:
                    raise UsageError(f"unknown key {k!r} in section [{s}]")
                sections[s][k] = v
                file_keys.add((s, k))
    flag_keys = set()
    for s, k, v in overrides:
        if s not in sections or k not in sections[s]:
            raise UsageError(f"unknown setting --{s}.{k}")
        sections[s][k] = v
        flag_keys.add((s, k))
    return RunConfig(command=command, sections=sections,
                     flag_keys=frozenset(flag_keys),
                     file_keys=frozenset(file_keys))


def _usage() -> str:
    lines = ["usage: diraclab COMMAND [--config FILE] [--section.key=value ...]",
             "commands: " + ", ".join(COMMANDS),
             "sections: " + ", ".join(DEFAULTS)]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Shared builders
# ---------------------------------------------------------------------------

def _potential_from(cfg: RunConfig):
    """None for the estimate default, 'zero', or a concrete PotentialSpec."""
    kind = cfg.get("potential", "kind").strip()
    if kind == "default":
        return None
    if kind == "zero":
        return "zero"
    common = dict(
        amplitude1=cfg.getfloat("potential", "amplitude1"),
        amplitude2=cfg.getfloat("potential", "amplitude2"),
        delta=cfg.getfloat("potential", "delta"),
        sigma=cfg.getfloat("potential", "sigma"),
        eps=cfg.getfloat("potential", "eps"),
    )
    if kind == "table":
        path = cfg.get("potential", "table").strip()
        if not path:
            raise UsageError("potential.kind=table needs potential.table=FILE")
        rows = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        if rows.shape[1] < 2:
            raise UsageError("potential table needs columns r,V1[,V2]")
        v2 = rows[:, 2] if rows.shape[1] > 2 else None
        # tabulated values are taken at face value; the amplitude knobs
        # only scale the named profiles
        common.pop("amplitude1"), common.pop("amplitude2")
        return PotentialSpec.from_table(rows[:, 0], rows[:, 1], v2, **common)
    ctor = {
        "gaussian_bump": PotentialSpec.gaussian_bump,
        "smooth_core": PotentialSpec.smooth_core,
        "saturating_vhp": PotentialSpec.saturating_vhp,
        "shell": PotentialSpec.shell,
    }.get(kind)
    if ctor is None:
        raise UsageError(f"unknown potential kind {kind!r}")
    if kind != "saturating_vhp":
        common.update(r0=cfg.getfloat("potential", "r0"),
                      width=cfg.getfloat("potential", "width"))
    return ctor(**common)


def _spec_potential(cfg: RunConfig) -> Optional[PotentialSpec]:
    """Concrete spec (or None) for the flow commands."""
    pot = _potential_from(cfg)
    if pot is None or pot == "zero":
        return None
    return pot


def _nonlinearity_from(cfg: RunConfig) -> CubicNonlinearity:
    kind = cfg.get("nonlinearity", "kind").strip()
    if kind == "none":
        return CubicNonlinearity.none()
    if kind == "beta_form":
        return CubicNonlinearity.beta_form()
    raise UsageError(f"unknown nonlinearity kind {kind!r}")


def _evolution_from(cfg: RunConfig) -> EvolutionConfig:
    sr = cfg.get("evolution", "support_radius").strip()
    return EvolutionConfig(
        dt=cfg.getfloat("evolution", "dt"),
        t_final=cfg.getfloat("evolution", "t_final"),
        record_dt=cfg.getfloat("evolution", "record_dt"),
        scheme=cfg.get("evolution", "scheme").strip(),
        support_radius=float(sr) if sr else None,
        blowup_factor=cfg.getfloat("evolution", "blowup_factor"),
    )


def _initial_field(cfg: RunConfig, grid: GridSpec) -> SpinorField3D:
    family = cfg.get("data", "family").strip()
    amp = cfg.getfloat("data", "amplitude")
    if family == "zero":
        f = SpinorField3D(grid, np.zeros((4, grid.n, grid.n, grid.n),
                                         dtype=np.complex128))
        return _normalized(cfg, f, amp)
    if family == "radial_bump":
        r0 = cfg.getfloat("data", "r0")
        w = cfg.getfloat("data", "width")
        q = cfg.getfloat("data", "freq")
        prof = lambda r: ((np.exp(-((r - r0) / w) ** 2)
                           + np.exp(-((r + r0) / w) ** 2)) * np.cos(q * r))
        f = radial_profile_field(grid, [prof, None, None, None])
    elif family == "band_limited":
        rng = np.random.default_rng(cfg.getint("data", "seed"))
        f = random_band_limited(grid, rng,
                                kmax_frac=cfg.getfloat("data", "kmax_frac"),
                                normalize="none")
    else:
        raise UsageError(f"unknown data family {family!r} for a 3D run")
    return _normalized(cfg, f, amp)


def _normalized(cfg: RunConfig, f: SpinorField3D, amp: float) -> SpinorField3D:
    mode = cfg.get("data", "normalize").strip()
    if mode == "none":
        f.values *= amp
        return f
    norm = {"l2": l2_norm, "h1": h1_norm}.get(mode)
    if norm is None:
        raise UsageError(f"unknown normalize mode {mode!r}")
    n0 = norm(f)
    if n0 == 0:
        raise UsageError("cannot normalize zero data")
    f.values *= amp / n0
    return f


def _sector_state(cfg: RunConfig, grid: GridSpec) -> RadialSpinorState:
    kappa = cfg.getint("data", "kappa")
    qn = QuantumNumbers(abs(kappa) - 0.5, 0.5, kappa)
    prof = SectorProfile(l=qn.l_plus, c=0.25,
                         scale=cfg.getfloat("data", "amplitude"),
                         width=cfg.getfloat("data", "width"))
    n_r = cfg.getint("data", "n_r")
    dr = grid.L / n_r
    nodes = dr * np.arange(1, n_r + 1)
    state = RadialSpinorState(qn, nodes,
                              prof.reduced(nodes).astype(np.complex128),
                              np.zeros(n_r, dtype=np.complex128))
    mode = cfg.get("data", "normalize").strip()
    if mode != "none":
        norm = {"l2": sector_l2, "h1": sector_h1}.get(mode)
        if norm is None:
            raise UsageError(f"unknown normalize mode {mode!r}")
        n0 = norm(state)
        if n0 == 0:
            raise UsageError("cannot normalize zero data")
        scale = cfg.getfloat("data", "amplitude") / n0
        state = RadialSpinorState(qn, nodes, state.u_plus * scale,
                                  state.u_minus * scale)
    return state


def _header(cfg: RunConfig, extras: list[str] = ()) -> list[str]:
    lines = [f"config: {cfg.fingerprint()}", f"command: {cfg.command}"]
    lines.extend(extras)
    return lines


def _finish(cfg: RunConfig, name: str, lines: list[str],
            artifacts: list[Path]) -> str:
    """Write the summary file, print it, return its digest."""
    out = cfg.out_dir()
    body = list(lines)
    for p in artifacts:
        if p.suffix == ".csv":
            body.append(f"artifact: {p.name} {file_digest(p)}")
        else:
            body.append(f"artifact: {p.name}")
    path = out / name
    path.write_text("\n".join(body) + "\n")
    digest = file_digest(path)
    for ln in body:
        print(ln)
    print(f"summary_hash: {digest}")
    return digest


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_verify_algebra(cfg: RunConfig) -> int:
    tol = cfg.getfloat("algebra", "tolerance")
    rep = verify_algebra(tol=tol)
    sq_n = cfg.getint("algebra", "square_n")
    sq_tol = cfg.getfloat("algebra", "square_tolerance")
    sq = dirac_square_check(GridSpec(n=sq_n, L=cfg.getfloat("grid", "L")),
                            n_fields=cfg.getint("algebra", "square_fields"),
                            seed=cfg.getint("ensemble", "seed"))
    rows = [[i.label, i.residual, i.tol, i.passed] for i in rep.identities]
    rows.append(["first-order square vs laplacian", sq, sq_tol, sq <= sq_tol])
    ok = rep.passed and sq <= sq_tol
    out = cfg.out_dir()
    csv = out / "algebra.csv"
    write_csv(csv, ["identity", "residual", "tolerance", "passed"], rows,
              comments=_header(cfg, [f"passed: {fmt_number(ok)}"]))
    _finish(cfg, "algebra_summary.txt",
            _header(cfg, [f"max_residual: {rep.max_residual:.3e}",
                          f"square_residual: {sq:.3e}",
                          f"passed: {fmt_number(ok)}"]),
            [csv])
    return 0 if ok else 1


def cmd_simulate(cfg: RunConfig) -> int:
    grid = cfg.grid()
    pot = _spec_potential(cfg)
    out = cfg.out_dir()
    family = cfg.get("data", "family").strip()
    ecfg = _evolution_from(cfg)
    if family == "sector":
        state = _sector_state(cfg, grid)
        rcfg = EvolutionConfig(dt=cfg.getfloat("evolution", "dt_radial"),
                               t_final=ecfg.t_final, record_dt=ecfg.record_dt)
        nl = cfg.get("nonlinearity", "kind").strip()
        if nl not in ("none", "beta_form"):
            raise UsageError(f"unknown nonlinearity kind {nl!r}")
        traj = evolve_radial(state, pot, rcfg, nonlinearity=nl)
        csv = out / "radial_norms.csv"
        rows = [[t, a, b, c] for t, a, b, c in
                zip(traj.times, traj.l2, traj.h1, traj.sup_amplitude)]
        write_csv(csv, ["t", "L2", "H1", "sup"], rows, comments=_header(cfg))
        h1s = np.asarray(traj.h1)
        lines = _header(cfg, [
            f"records: {len(traj.times)}",
            f"initial_h1: {h1s[0]:.12g}",
            f"sup_h1: {h1s.max():.12g}",
            f"h1_growth: {h1s.max() / h1s[0]:.6g}" if h1s[0] > 0 else "h1_growth: 0",
        ])
        _finish(cfg, "simulate_summary.txt", lines, [csv])
        return 0
    f = _initial_field(cfg, grid)
    nl = _nonlinearity_from(cfg)
    csv = out / "norms.csv"
    if cfg.getbool("simulate", "snapshots"):
        traj = write_trajectory(out, f, pot, nl, ecfg,
                                header_comments=_header(cfg))
    else:
        traj = evolve(f, pot, nl, ecfg)
        write_norm_log(csv, traj, header_comments=_header(cfg))
    h1s = np.asarray(traj.h1)
    top = h1s.max() if h1s.size else 0.0
    lines = _header(cfg, [
        f"records: {len(traj.times)}",
        f"initial_h1: {h1s[0]:.12g}",
        f"sup_h1: {top:.12g}",
        f"h1_growth: {top / h1s[0]:.6g}" if h1s[0] > 0 else "h1_growth: 0",
    ])
    _finish(cfg, "simulate_summary.txt", lines, [csv])
    return 0


def cmd_verify_estimate(cfg: RunConfig) -> int:
    size = cfg.getint("ensemble", "size")
    if size < 1:
        raise UsageError("ensemble.size must be at least 1")
    kind = cfg.get("estimate", "id").strip()
    s_omega = cfg.get("estimate", "s_omega").strip()
    rep = verify_estimate(
        kind,
        n_samples=size,
        seed=cfg.getint("ensemble", "seed"),
        grid=cfg.grid(),
        t_final=cfg.getfloat("evolution", "t_final"),
        dt=cfg.getfloat("evolution", "dt"),
        record_dt=cfg.getfloat("evolution", "record_dt"),
        n_r=cfg.getint("data", "n_r"),
        dt_radial=cfg.getfloat("evolution", "dt_radial"),
        s_omega=float(s_omega) if s_omega else None,
        potential=_potential_from(cfg),
        angular_p=cfg.getfloat("estimate", "angular_p"),
        cap=cfg.getfloat("estimate", "cap"),
        refine=cfg.getbool("estimate", "refine"),
    )
    out = cfg.out_dir()
    csv = out / f"estimate_{kind}.csv"
    rep.write_csv(csv)
    # prepend the config fingerprint to the report's own summary block
    text = csv.read_text()
    csv.write_text(f"# config: {cfg.fingerprint()}\n" + text)
    _finish(cfg, f"estimate_{kind}_summary.txt",
            _header(cfg, rep.summary_lines()), [csv])
    return 0 if rep.passed else 1


def cmd_cross_validate(cfg: RunConfig) -> int:
    grid = cfg.grid()
    kappa = cfg.getint("data", "kappa")
    qn = QuantumNumbers(abs(kappa) - 0.5, 0.5, kappa)
    prof = SectorProfile(l=qn.l_plus, c=0.25,
                         scale=cfg.getfloat("data", "amplitude"),
                         width=cfg.getfloat("data", "width"))
    zero = lambda r: np.zeros_like(r)
    nl = cfg.get("nonlinearity", "kind").strip()
    if nl not in ("none", "beta_form"):
        raise UsageError(f"unknown nonlinearity kind {nl!r}")
    rep = cross_validate(
        qn, prof.amplitude, zero,
        _spec_potential(cfg), grid,
        n_r=cfg.getint("data", "n_r"),
        dt_3d=cfg.getfloat("evolution", "dt"),
        dt_radial=cfg.getfloat("evolution", "dt_radial"),
        t_final=cfg.getfloat("cross", "t_final"),
        nonlinearity=nl,
        record_dt=cfg.getfloat("evolution", "record_dt"),
    )
    threshold = cfg.getfloat("cross", "threshold")
    worst = float(np.max(rep.series))
    ok = worst <= threshold
    out = cfg.out_dir()
    csv = out / "cross.csv"
    rows = [[t, d] for t, d in zip(rep.times, rep.series)]
    write_csv(csv, ["t", "rel_l2"], rows,
              comments=_header(cfg, [f"threshold: {threshold:g}",
                                     f"max_rel_l2: {worst:.6e}",
                                     f"passed: {fmt_number(ok)}"]))
    _finish(cfg, "cross_summary.txt",
            _header(cfg, [f"max_rel_l2: {worst:.6e}",
                          f"final_rel_l2: {rep.rel_l2:.6e}",
                          f"sector_loss: {rep.sector_loss:.3e}",
                          f"radial_l2_drift: {rep.radial_l2_drift:.3e}",
                          f"threshold: {threshold:g}",
                          f"passed: {fmt_number(ok)}"]),
            [csv])
    return 0 if ok else 1


def cmd_report(cfg: RunConfig) -> int:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = cfg.out_dir()
    csvs = sorted(out.glob("*.csv"))
    if not csvs:
        raise UsageError(f"no CSV reports under {out}")
    lines = _header(cfg)
    figures = []
    for path in csvs:
        lines.append(f"source: {path.name} {file_digest(path)}")
        lines.extend(f"  {c}" for c in _csv_comments(path)[:6])
        png = path.with_suffix(".png")
        if _render(plt, path, png):
            figures.append(png)
    _finish(cfg, "report_summary.txt", lines, csvs + figures)
    return 0


def _csv_comments(path: Path) -> list[str]:
    out = []
    with open(path) as fh:
        for ln in fh:
            if not ln.startswith("#"):
                break
            out.append(ln[1:].strip())
    return out


def _csv_table(path: Path):
    with open(path) as fh:
        rows = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    header = rows[0].split(",")
    try:
        data = np.array([[float(x) for x in r.split(",")] for r in rows[1:]])
    except ValueError:
        return header, None
    return header, data


def _render(plt, path: Path, png: Path) -> bool:
    header, data = _csv_table(path)
    if data is None or data.size == 0:
        return False
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    name = path.stem
    if header[0] in ("t",):
        for j in range(1, len(header)):
            ax.plot(data[:, 0], data[:, j], label=header[j])
        ax.set_xlabel("t")
        ax.legend()
        if name == "cross":
            ax.set_yscale("log")
    elif name.startswith("estimate_"):
        ax.plot(data[:, 0], data[:, 3], "o-", label="ratio")
        for c in _csv_comments(path):
            if c.startswith("cap:"):
                ax.axhline(float(c.split(":")[1]), ls="--", color="0.4",
                           label="cap")
                break
        ax.set_xlabel("sample")
        ax.set_ylabel("LHS / RHS")
        ax.set_yscale("log")
        ax.legend()
    else:
        ax.bar(np.arange(len(data)), np.maximum(data[:, 1], 1e-20))
        ax.set_yscale("log")
        ax.set_ylabel(header[1])
    ax.set_title(name)
    fig.tight_layout()
    fig.savefig(png, dpi=110, metadata={"Software": "diraclab"})
    plt.close(fig)
    return True


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

_HANDLERS = {
    "verify-algebra": cmd_verify_algebra,
    "simulate": cmd_simulate,
    "verify-estimate": cmd_verify_estimate,
    "cross-validate": cmd_cross_validate,
    "report": cmd_report,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = parse_args(argv)
        return _HANDLERS[cfg.command](cfg)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return USAGE_EXIT
    except (UnknownEstimate, InadmissiblePotential) as e:
        print(str(e), file=sys.stderr)
        return USAGE_EXIT
    except SolverBlowup as e:
        _write_blowup(argv, e)
        return BLOWUP_EXIT
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return USAGE_EXIT


def _write_blowup(argv, err) -> None:
    try:
        cfg = parse_args(argv)
        out = cfg.out_dir()
        (out / "blowup.txt").write_text(
            f"config: {cfg.fingerprint()}\n{err}\n")
        print(f"solver blowup, diagnostics in {out / 'blowup.txt'}",
              file=sys.stderr)
    except Exception:
        print(f"solver blowup: {err}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
