"""Command-line entry point ``bsmkit``.

Every run writes a manifest JSON next to its first output holding the
resolved configuration and SHA-256 hashes of inputs and outputs;
``bsmkit replay MANIFEST`` re-executes it and compares output hashes.
Option values resolve as: command-line flag, then ``--config`` file, then
built-in default.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from . import tfset
from .acoustics import (
    RigidSphereArraySpec,
    SphericalHeadHrtfSpec,
    circular_layout,
    free_field_steering,
    positions_on_sphere,
    rigid_sphere_steering,
    semicircular_layout,
    spherical_head_hrtf,
)
from .core import (
    Direction,
    DirectionGrid,
    FilterSet,
    FrequencyGrid,
    Method,
    TFKind,
    TransferFunctionSet,
    reconstruct,
    ring_and_caps_grid,
    ring_grid,
    spiral_grid,
    unique_horizontal,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


# (flag, dest, type, default, help); default None means "not set"
_GRID_OPTS = [
    ("--fs", "fs", float, 48000.0, "sample rate in Hz"),
    ("--nfft", "nfft", int, 1024, "FFT size"),
    ("--grid", "grid", str, "ring-caps:2", "ring:DEG, lebedev-like:N or ring-caps:DEG"),
]
_IMAGLS_OPTS = [
    ("--lambda1", "lambda1", float, 0.4, "derivative-term weight"),
    ("--lambda2", "lambda2", float, 10.0, "ILD-term weight"),
    ("--lr", "lr", float, 0.0008, "Adam learning rate"),
    ("--iters", "iters", int, 200, "training iterations"),
    ("--seed", "seed", int, 0, "initialisation seed"),
    ("--horiz-count", "horiz_count", int, 361, "horizontal directions in the ILD term"),
]
COMMANDS = {
    "simulate-atf": {
        "help": "simulate an array ATF and write a TFSET file",
        "opts": [
            ("--model", "model", str, "rigid-sphere", "rigid-sphere or free-field"),
            ("--radius", "radius", float, 0.1, "array radius in m"),
            ("--mics", "mics", int, 6, "number of microphones"),
            ("--layout", "layout", str, "semicircle", "circle, semicircle or custom-json"),
            ("--mic-json", "mic_json", str, None, "JSON list of [elevation, azimuth] pairs (custom-json)"),
            *_GRID_OPTS,
            ("--out", "out", str, None, "output TFSET path"),
        ],
        "inputs": ["mic_json"],
        "outputs": ["out"],
    },
    "synth-hrtf": {
        "help": "spherical-head HRTF as a TFSET file",
        "opts": [
            ("--head-radius", "head_radius", float, 0.0875, "head radius in m"),
            ("--ear-az", "ear_az", float, 100.0, "left-ear azimuth; the right ear is mirrored"),
            *_GRID_OPTS,
            ("--out", "out", str, None, "output TFSET path"),
        ],
        "inputs": [],
        "outputs": ["out"],
    },
    "design": {
        "help": "design BSM filters (ls, magls, imagls)",
        "opts": [
            ("--method", "method", str, "magls", "ls, magls or imagls"),
            ("--atf", "atf", str, None, "array ATF TFSET"),
            ("--hrtf", "hrtf", str, None, "HRTF TFSET"),
            ("--snr-db", "snr_db", float, 20.0, "design SNR in dB"),
            ("--fc", "fc", float, 1500.0, "MagLS cutoff in Hz"),
            *_IMAGLS_OPTS,
            ("--out", "out", str, None, "output filter TFSET"),
            ("--history-csv", "history_csv", str, None, "training history CSV (imagls)"),
        ],
        "inputs": ["atf", "hrtf"],
        "outputs": ["out", "history_csv"],
    },
    "evaluate": {
        "help": "objective errors of filter sets against a reference HRTF",
        "opts": [
            ("--ref-hrtf", "ref_hrtf", str, None, "reference HRTF TFSET"),
            ("--atf", "atf", str, None, "array ATF TFSET on the same grid"),
            ("--filters", "filters", "list", None, "one or more filter TFSET files"),
            ("--metrics", "metrics", str, "all", "nmse, mag, ild or all (comma separated)"),
            ("--horiz-count", "horiz_count", int, 361, "horizontal evaluation directions"),
            ("--bands", "bands", int, 23, "auditory bands"),
            ("--f-min", "f_min", float, 1500.0, "lower frequency for summaries"),
            ("--out-csv", "out_csv", str, None, "long-format CSV"),
            ("--out-json", "out_json", str, None, "JSON summary"),
        ],
        "inputs": ["ref_hrtf", "atf", "filters"],
        "outputs": ["out_csv", "out_json"],
    },
    "analyze-ild-bound": {
        "help": "zero-ILD construction and multi-direction feasibility at one bin",
        "opts": [
            ("--atf", "atf", str, None, "array ATF TFSET"),
            ("--hrtf", "hrtf", str, None, "HRTF TFSET (for the achieved ILD error)"),
            ("--direction", "direction", str, "90,30", "target as ELEVATION,AZIMUTH in degrees"),
            ("--alpha", "alpha", float, 1.0, "gain alpha > 0"),
            ("--freq", "freq", float, 4000.0, "analysis frequency in Hz (nearest bin)"),
            ("--subset-count", "subset_count", int, 0, "horizontal subset size S (0: M-1 and M)"),
            ("--horiz-count", "horiz_count", int, 361, "horizontal directions to draw subsets from"),
            ("--out-json", "out_json", str, None, "JSON report"),
        ],
        "inputs": ["atf", "hrtf"],
        "outputs": ["out_json"],
    },
    "rotation-sweep": {
        "help": "head-rotation compensation sweep",
        "opts": [
            ("--atf", "atf", str, None, "array ATF TFSET"),
            ("--hrtf", "hrtf", str, None, "HRTF TFSET"),
            ("--angles", "angles", str, "0:30:90", "START:STEP:STOP (inclusive) or a comma list"),
            ("--methods", "methods", str, "magls,imagls", "comma separated methods"),
            ("--snr-db", "snr_db", float, 20.0, "design SNR in dB"),
            ("--fc", "fc", float, 1500.0, "MagLS cutoff in Hz"),
            *_IMAGLS_OPTS,
            ("--jobs", "jobs", int, 1, "parallel worker processes"),
            ("--out-csv", "out_csv", str, None, "sweep CSV"),
        ],
        "inputs": ["atf", "hrtf"],
        "outputs": ["out_csv"],
    },
    "roomsim": {
        "help": "image-method room responses (omni, array, binaural)",
        "opts": [
            ("--room", "room", str, "5x4x3", "LxWxH in m"),
            ("--t60", "t60", float, None, "reverberation time (Sabine) in s"),
            ("--beta", "beta", float, None, "uniform reflection coefficient (instead of --t60)"),
            ("--order", "order", int, 12, "maximum reflection order"),
            ("--src", "src", str, "2,1.5,1.2", "source position x,y,z"),
            ("--rcv", "rcv", str, "3,2.5,1.5", "receiver position x,y,z"),
            ("--fs", "fs", float, 48000.0, "sample rate"),
            ("--atf", "atf", str, None, "array ATF TFSET (renders array signals)"),
            ("--hrtf", "hrtf", str, None, "HRTF TFSET (renders the reference BRIR)"),
            ("--out-prefix", "out_prefix", str, None, "output path prefix"),
        ],
        "inputs": ["atf", "hrtf"],
        "outputs": ["out_prefix"],
    },
    "render": {
        "help": "apply filters to a multichannel WAV",
        "opts": [
            ("--filters", "filters", str, None, "filter TFSET"),
            ("--input-wav", "input_wav", str, None, "M-channel input WAV"),
            ("--out-wav", "out_wav", str, None, "binaural output WAV"),
            ("--format", "format", str, "float32", "float32, pcm16 or pcm24"),
            ("--normalize", "normalize", str, "none", "none or peak"),
            ("--trim", "trim", "flag", False, "remove the causality delay"),
        ],
        "inputs": ["filters", "input_wav"],
        "outputs": ["out_wav"],
    },
}


# ---------------------------------------------------------------- helpers


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _require(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) in (None, "", [])]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _floats(text: str, n: int, sep: str = ","):
    try:
        vals = [float(x) for x in str(text).split(sep)]
    except ValueError as exc:
        raise UsageError(f"cannot parse {text!r}") from exc
    if len(vals) != n:
        raise UsageError(f"expected {n} values in {text!r}")
    return vals


def parse_grid(spec: str) -> DirectionGrid:
    kind, _, arg = spec.partition(":")
    try:
        if kind == "ring":
            return ring_grid(float(arg or 1.0))
        if kind == "lebedev-like":
            return spiral_grid(int(arg))
        if kind == "ring-caps":
            return ring_and_caps_grid(float(arg or 2.0))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    raise UsageError(f"unknown grid {spec!r}")


def parse_angles(text: str):
    if ":" in text:
        start, step, stop = _floats(text, 3, ":")
        if step <= 0:
            raise UsageError("angle step must be positive")
        return list(np.arange(start, stop + step / 2, step))
    return _floats(text, len(text.split(",")))


def parse_method(name: str) -> Method:
    table = {"ls": Method.LS, "magls": Method.MagLS, "imagls": Method.iMagLS}
    try:
        return table[name.strip().lower()]
    except KeyError:
        raise UsageError(f"unknown method {name!r}") from None


def run_id(command: str, cfg: dict, inputs: dict) -> str:
    outs = set(COMMANDS[command]["outputs"])
    body = {"command": command, "config": {k: v for k, v in cfg.items() if k not in outs}, "inputs": inputs}
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:16]


def _load_tf(path, kind=None):
    obj = tfset.load(path)
    if kind is not None:
        if kind == TFKind.FILTER and not isinstance(obj, FilterSet):
            raise ValueError(f"{path} does not hold filters")
        if kind != TFKind.FILTER and (isinstance(obj, FilterSet) or obj.kind != kind):
            raise ValueError(f"{path} is not a {kind.name} set")
    return obj


def _write_text(path, text):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)


# ---------------------------------------------------------------- commands


def cmd_simulate_atf(cfg, rid):
    _require(cfg, "out")
    grid = FrequencyGrid(cfg["fs"], cfg["nfft"])
    dirs = parse_grid(cfg["grid"])
    if cfg["layout"] == "custom-json":
        _require(cfg, "mic_json")
        pairs = np.asarray(json.loads(Path(cfg["mic_json"]).read_text()), dtype=float)
        mics = DirectionGrid(pairs[:, 0], pairs[:, 1])
    elif cfg.get("mic_json"):
        raise UsageError("--mic-json requires --layout custom-json")
    elif cfg["layout"] == "circle":
        mics = circular_layout(cfg["mics"])
    elif cfg["layout"] == "semicircle":
        mics = semicircular_layout(cfg["mics"])
    else:
        raise UsageError(f"unknown layout {cfg['layout']!r}")
    if cfg["model"] == "rigid-sphere":
        atf = rigid_sphere_steering(RigidSphereArraySpec(cfg["radius"], mics), grid, dirs)
    elif cfg["model"] == "free-field":
        atf = free_field_steering(positions_on_sphere(mics, cfg["radius"]), grid, dirs)
    else:
        raise UsageError(f"unknown model {cfg['model']!r}")
    tfset.save(cfg["out"], atf)
    print(f"wrote ATF: {atf.channels} mics, {len(dirs)} directions, {grid.bins} bins -> {cfg['out']}")
    return [cfg["out"]]


def cmd_synth_hrtf(cfg, rid):
    _require(cfg, "out")
    grid = FrequencyGrid(cfg["fs"], cfg["nfft"])
    dirs = parse_grid(cfg["grid"])
    az = cfg["ear_az"] % 360.0
    spec = SphericalHeadHrtfSpec(cfg["head_radius"], Direction(90.0, az), Direction(90.0, (360.0 - az) % 360.0))
    hrtf = spherical_head_hrtf(spec, grid, dirs)
    tfset.save(cfg["out"], hrtf)
    print(f"wrote HRTF: {len(dirs)} directions, {grid.bins} bins -> {cfg['out']}")
    return [cfg["out"]]


def _imagls_config(cfg):
    from .imagls import ImaglsConfig

    return ImaglsConfig(lambda1=cfg["lambda1"], lambda2=cfg["lambda2"], lr=cfg["lr"], iterations=cfg["iters"],
                        cutoff_hz=cfg["fc"], seed=cfg["seed"], horiz_count=cfg["horiz_count"])


def cmd_design(cfg, rid):
    from .design import DesignConfig, design_ls, design_magls

    _require(cfg, "atf", "hrtf", "out")
    method = parse_method(cfg["method"])
    if cfg.get("history_csv") and method != Method.iMagLS:
        raise UsageError("--history-csv only applies to --method imagls")
    atf = _load_tf(cfg["atf"], TFKind.ATF)
    hrtf = _load_tf(cfg["hrtf"], TFKind.HRTF)
    dcfg = DesignConfig(cfg["snr_db"], cfg["fc"], atf.grid.fft_size)
    outputs = [cfg["out"]]
    if method == Method.LS:
        filters = design_ls(atf, hrtf, dcfg)
    else:
        filters = design_magls(atf, hrtf, dcfg)
        if method == Method.iMagLS:
            from .imagls import train_imagls

            filters, state = train_imagls(atf, hrtf, filters, _imagls_config(cfg))
            hist = cfg.get("history_csv") or cfg["out"] + ".history.csv"
            _write_text(hist, state.history_csv(f"run: {rid}"))
            outputs.append(hist)
            h = state.history[state.best_iteration]
            print(f"best iteration {state.best_iteration}: D_MLS={h.mls:.6g} D_dMLS={h.dmls:.6g} "
                  f"D_ILD={h.ild:.6g} total={h.total:.6g}")
    tfset.save(cfg["out"], filters)
    print(f"wrote {filters.method.name} filters -> {cfg['out']}")
    return outputs


def cmd_evaluate(cfg, rid):
    from .filterbank import make_filterbank
    from .metrics import evaluate, reports_to_json

    _require(cfg, "ref_hrtf", "atf", "filters")
    if not (cfg.get("out_csv") or cfg.get("out_json")):
        raise UsageError("give --out-csv and/or --out-json")
    wanted = {m.strip() for m in cfg["metrics"].split(",")}
    if not wanted <= {"nmse", "mag", "ild", "all"}:
        raise UsageError(f"unknown metrics {sorted(wanted)}")
    ref = _load_tf(cfg["ref_hrtf"], TFKind.HRTF)
    atf = _load_tf(cfg["atf"], TFKind.ATF)
    bank = horiz = None
    if wanted & {"ild", "all"}:
        bank = make_filterbank(ref.grid, 1500.0, 20000.0, cfg["bands"])
        horiz = unique_horizontal(ref.directions, cfg["horiz_count"])
    reports = []
    for path in cfg["filters"]:
        f = _load_tf(path, TFKind.FILTER)
        rep = evaluate(f.method.name, ref.data, reconstruct(f, atf), ref.grid.bin_frequencies, bank, horiz,
                       cfg["f_min"])
        rep.method = f"{f.method.name}:{Path(path).name}"
        reports.append(rep)
        print(" ".join(f"{k}={v}" for k, v in rep.table_row().items()))
    outputs = []
    keep = {"nmse": ("nmse",), "mag": ("mag",), "ild": ("ild_error",)}
    if cfg.get("out_csv"):
        allowed = None if "all" in wanted else {p for w in wanted for p in keep[w]}
        lines = [f"# run: {rid}", "method,metric,frequency_or_band,direction,value"]
        for rep in reports:
            for r in rep.long_rows():
                if r[1] == "bsd":
                    continue
                if allowed is None or any(r[1].startswith(a) for a in allowed):
                    lines.append(",".join([r[0], r[1], r[2], r[3], repr(r[4])]))
        _write_text(cfg["out_csv"], "\n".join(lines) + "\n")
        outputs.append(cfg["out_csv"])
    if cfg.get("out_json"):
        _write_text(cfg["out_json"], reports_to_json(reports) + "\n")
        outputs.append(cfg["out_json"])
    return outputs


def cmd_analyze_ild_bound(cfg, rid):
    from .analysis import construct_zero_ild_w, multi_direction_feasibility

    _require(cfg, "atf")
    atf = _load_tf(cfg["atf"], TFKind.ATF)
    el, az = _floats(cfg["direction"], 2)
    q, mismatch = atf.directions.nearest(el, az)
    q = int(q)
    b = int(np.argmin(np.abs(atf.grid.bin_frequencies - cfg["freq"])))
    v = atf.data[b, :, q]
    h_cols = None
    if cfg.get("hrtf"):
        hrtf = _load_tf(cfg["hrtf"], TFKind.HRTF)
        if hrtf.directions != atf.directions or hrtf.grid != atf.grid:
            raise ValueError("ATF and HRTF grids differ")
        h_cols = hrtf.data[b].T
    design = construct_zero_ild_w(v, q, len(atf.directions), cfg["alpha"], h_cols)
    horiz = unique_horizontal(atf.directions, cfg["horiz_count"])
    M = atf.channels
    sizes = [cfg["subset_count"]] if cfg["subset_count"] > 0 else [max(M - 1, 1), M]
    report = {"bin": b, "frequency_hz": float(atf.grid.bin_frequencies[b]), "target_index": q,
              "target_mismatch_deg": float(mismatch), "alpha": design.alpha,
              "ild_error_db": design.ild_error_db, "feasibility": []}
    print(f"bin {b} ({report['frequency_hz']:.1f} Hz), target direction index {q}")
    if design.ild_error_db is not None:
        print(f"achieved narrow-band ILD error at target: {design.ild_error_db:.3e} dB")
    for S in sizes:
        pick = horiz[np.linspace(0, horiz.size - 1, S).round().astype(int)] if S <= horiz.size else horiz
        rep = multi_direction_feasibility(atf, pick, [b])
        for line in rep.lines():
            print(line)
        report["feasibility"].append({"S": rep.subset_size, "M": rep.mics, "rank": int(rep.rank[0]),
                                      "null_dim": int(rep.null_dim[0]), "constructible": rep.constructible})
    if cfg.get("out_json"):
        _write_text(cfg["out_json"], json.dumps(report, indent=2, sort_keys=True) + "\n")
        return [cfg["out_json"]]
    return []


def cmd_rotation_sweep(cfg, rid):
    from .analysis import rotation_sweep, sweep_csv
    from .design import DesignConfig

    _require(cfg, "atf", "hrtf", "out_csv")
    atf = _load_tf(cfg["atf"], TFKind.ATF)
    hrtf = _load_tf(cfg["hrtf"], TFKind.HRTF)
    methods = [parse_method(m) for m in cfg["methods"].split(",")]
    rows = rotation_sweep(atf, hrtf, parse_angles(cfg["angles"]), methods,
                          DesignConfig(cfg["snr_db"], cfg["fc"], atf.grid.fft_size), _imagls_config(cfg),
                          horiz=unique_horizontal(atf.directions, cfg["horiz_count"]), jobs=cfg["jobs"])
    text = sweep_csv(rows, f"run: {rid}")
    _write_text(cfg["out_csv"], text)
    sys.stdout.write(text)
    return [cfg["out_csv"]]


def cmd_roomsim(cfg, rid):
    from .audio import write_wav
    from .roomsim import RoomSpec, beta_from_t60, image_sources, omni_rir, render_array_signals

    _require(cfg, "out_prefix")
    if cfg.get("t60") is not None and cfg.get("beta") is not None:
        raise UsageError("--t60 and --beta are mutually exclusive")
    dims = _floats(cfg["room"], 3, "x")
    if cfg.get("beta") is not None:
        beta = cfg["beta"]
    else:
        beta = beta_from_t60(dims, cfg["t60"] if cfg.get("t60") is not None else 0.3)
    spec = RoomSpec(tuple(dims), beta, cfg["order"], tuple(_floats(cfg["src"], 3)), tuple(_floats(cfg["rcv"], 3)),
                    cfg["fs"])
    images = image_sources(spec)
    prefix = cfg["out_prefix"]
    Path(prefix).parent.mkdir(parents=True, exist_ok=True)
    outputs = []
    fs = int(spec.sample_rate)
    rir = omni_rir(images, spec.sample_rate)
    write_wav(prefix + "_rir.wav", rir, fs)
    outputs.append(prefix + "_rir.wav")
    info = {"room": spec.as_dict(), "beta": float(beta), "images": len(images), "run": rid}
    for key, kind, suffix in (("atf", TFKind.ATF, "_array.wav"), ("hrtf", TFKind.HRTF, "_brir.wav")):
        if cfg.get(key):
            tf = _load_tf(cfg[key], kind)
            sig, worst = render_array_signals(images, tf)
            write_wav(prefix + suffix, sig, fs)
            outputs.append(prefix + suffix)
            info[f"{key}_max_mismatch_deg"] = worst
    _write_text(prefix + "_room.json", json.dumps(info, indent=2, sort_keys=True) + "\n")
    outputs.append(prefix + "_room.json")
    print(f"{len(images)} images, beta={beta:.4f}; wrote {', '.join(outputs)}")
    return outputs


def cmd_render(cfg, rid):
    from .audio import FORMATS, read_wav, write_wav
    from .render import binaural_render

    _require(cfg, "filters", "input_wav", "out_wav")
    if cfg["format"] not in FORMATS:
        raise UsageError(f"unknown format {cfg['format']!r}")
    filters = _load_tf(cfg["filters"], TFKind.FILTER)
    x, fs = read_wav(cfg["input_wav"])
    if fs != filters.grid.sample_rate:
        raise ValueError(f"input sample rate {fs} differs from the filters' {filters.grid.sample_rate:g}")
    if x.shape[1] != filters.mic_count:
        raise ValueError(f"input has {x.shape[1]} channels, filters expect {filters.mic_count}")
    y = binaural_render(x, filters, fs, trim=cfg["trim"], normalize=cfg["normalize"])
    write_wav(cfg["out_wav"], y, fs, cfg["format"])
    print(f"rendered {x.shape[0]} samples -> {cfg['out_wav']}")
    return [cfg["out_wav"]]


HANDLERS = {
    "simulate-atf": cmd_simulate_atf,
    "synth-hrtf": cmd_synth_hrtf,
    "design": cmd_design,
    "evaluate": cmd_evaluate,
    "analyze-ild-bound": cmd_analyze_ild_bound,
    "rotation-sweep": cmd_rotation_sweep,
    "roomsim": cmd_roomsim,
    "render": cmd_render,
}


# ---------------------------------------------------------------- plumbing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bsmkit", description="Binaural signal matching toolkit")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, spec in COMMANDS.items():
        sp = sub.add_parser(name, help=spec["help"])
        sp.add_argument("--config", help="JSON file with option values")
        sp.add_argument("--manifest", help="manifest path (default: <first output>.manifest.json)")
        for flag, dest, typ, default, help_ in spec["opts"]:
            shown = f"{help_} (default: {default})" if default not in (None, False) else help_
            if typ == "flag":
                sp.add_argument(flag, dest=dest, action="store_const", const=True, default=None, help=shown)
            elif typ == "list":
                sp.add_argument(flag, dest=dest, nargs="+", default=None, help=shown)
            else:
                sp.add_argument(flag, dest=dest, type=typ, default=None, help=shown)
    rp = sub.add_parser("replay", help="re-run a manifest and compare output hashes")
    rp.add_argument("manifest")
    rp.add_argument("--out-dir", help="directory for regenerated outputs (default: temporary)")
    return p


def resolve_config(command: str, flags: dict, config_file=None) -> dict:
    """Merge defaults, config-file values and explicit flags (highest precedence)."""
    spec = COMMANDS[command]
    cfg = {dest: default for _, dest, _, default, _ in spec["opts"]}
    if config_file:
        data = json.loads(Path(config_file).read_text())
        if command in data and isinstance(data[command], dict):
            data = data[command]
        unknown = set(data) - set(cfg)
        if unknown:
            raise UsageError(f"unknown keys in config file: {sorted(unknown)}")
        cfg.update(data)
    for k, v in flags.items():
        if k in cfg and v is not None:
            cfg[k] = v
    return cfg


def _input_hashes(command, cfg):
    out = {}
    for key in COMMANDS[command]["inputs"]:
        val = cfg.get(key)
        if not val:
            continue
        for path in val if isinstance(val, list) else [val]:
            if not os.path.exists(path):
                raise FileNotFoundError(path)
            out[str(path)] = sha256_file(path)
    return out


def execute(command: str, cfg: dict, manifest_path=None) -> dict:
    inputs = _input_hashes(command, cfg)
    rid = run_id(command, cfg, inputs)
    outputs = HANDLERS[command](cfg, rid)
    manifest = {
        "tool": "bsmkit",
        "version": __version__,
        "command": command,
        "config": cfg,
        "inputs": inputs,
        "outputs": {str(p): sha256_file(p) for p in outputs},
        "run_id": rid,
    }
    if outputs or manifest_path:
        mpath = manifest_path or str(outputs[0]) + ".manifest.json"
        _write_text(mpath, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        manifest["path"] = mpath
    return manifest


def replay(manifest_file, out_dir=None) -> bool:
    """Re-run a manifest with outputs redirected to ``out_dir``; True when all hashes match."""
    m = json.loads(Path(manifest_file).read_text())
    command, cfg = m["command"], dict(m["config"])
    for path, digest in m["inputs"].items():
        if sha256_file(path) != digest:
            raise ValueError(f"input changed since the recorded run: {path}")
    out_dir = Path(out_dir or tempfile.mkdtemp(prefix="bsmkit-replay-"))
    out_dir.mkdir(parents=True, exist_ok=True)
    mapping = {}
    for key in COMMANDS[command]["outputs"]:
        if cfg.get(key):
            new = str(out_dir / Path(cfg[key]).name)
            mapping[str(cfg[key])] = new
            cfg[key] = new
    new_m = execute(command, cfg, str(out_dir / "replay.manifest.json"))
    ok = True
    for path, digest in m["outputs"].items():
        new_path = next((new + path[len(old):] for old, new in mapping.items() if path.startswith(old)), path)
        got = new_m["outputs"].get(new_path)
        match = got == digest
        ok &= match
        print(f"{'OK  ' if match else 'DIFF'} {path} -> {new_path}")
    return ok


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "replay":
            return EXIT_OK if replay(args.manifest, args.out_dir) else EXIT_DATA
        flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "manifest")}
        cfg = resolve_config(args.command, flags, args.config)
        execute(args.command, cfg, args.manifest)
        return EXIT_OK
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
