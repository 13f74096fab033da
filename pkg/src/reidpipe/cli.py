"""Batch command-line interface.

Subcommands compose the library into reproducible experiments:

    synth      write a synthetic two-camera dataset as PNG trees
    fep        dump raw/regulated motion-energy signals as CSV
    cycles     detect cycles and emit sampled frame groups as CSV
    features   extract per-frame vectors into an FVEC file + index
    pool       pool an FVEC file by frame groups into descriptors
    train      fit PCA + KISSME on a dataset and save the model
    eval       run the full split/rank/CMC protocol, write the report
    sweep      re-run eval varying one configuration axis

Every subcommand is deterministic given its inputs, flags, and seed.
A config file of flat ``key = value`` lines may supply defaults; flags
given on the command line win.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from .core import RngHandle, load_dataset
from .cycle import (DEFAULT_KEEP, SamplingStrategy, compute_fep, detect_cycles,
                    regulate_fep, sample_frames)
from .errors import NoCycleFound, NotFound, ReidError
from .evaluate import (Config, render_cmc_csv, render_cmc_svg,
                       render_report_text, render_sweep_csv, run_evaluation,
                       sweep)
from .feature import (HandcraftedExtractor, load_external_features, pool,
                      save_features)
from .metric import save_model
from .evaluate import build_extractor, fit_trial_models
from .feature import describe_sequence
from .synth import SynthSpec, generate_synthetic

STRATEGY_FLAGS = {
    "representative": "representative",
    "random-whole": "random_whole",
    "equal-segments": "equal_segments",
    "all": "all_frames",
    "random-halves": "random_halves",
}
POOLING_FLAGS = {"max": "max", "avg": "average", "first": "first_frame"}


def _read_config_file(path) -> dict:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ReidError(f"config line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def _resolve_config(args) -> Config:
    file_values = _read_config_file(args.config) if args.config else {}

    def pick(flag, key, cast=str):
        if flag is not None:
            return flag
        if key in file_values:
            return cast(file_values[key])
        return None

    kwargs = {}
    strategy = pick(args.strategy, "strategy")
    if strategy is not None:
        kwargs["strategy"] = STRATEGY_FLAGS.get(strategy, strategy)
    pooling = pick(args.pooling, "pooling")
    if pooling is not None:
        kwargs["pooling"] = POOLING_FLAGS.get(pooling, pooling)
    for flag, key, cast in [(args.frames, "k", int),
                            (args.pca_dim, "pca_dim", int),
                            (args.metric, "metric", str),
                            (args.measure, "measure", str),
                            (args.trials, "trials", int),
                            (args.seed, "seed", int),
                            (args.features_file, "extractor", str)]:
        value = pick(flag, key, cast)
        if value is not None:
            kwargs[key if key != "extractor" else "extractor"] = value
    return Config(**kwargs)


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--frames", type=int, default=None,
                   help="frames per cycle (K)")
    p.add_argument("--strategy", choices=sorted(STRATEGY_FLAGS))
    p.add_argument("--pooling", choices=sorted(POOLING_FLAGS))
    p.add_argument("--pca-dim", type=int, default=None, dest="pca_dim")
    p.add_argument("--metric", choices=["euclidean", "kissme"])
    p.add_argument("--measure", choices=["min", "avg"])
    p.add_argument("--features-file", default=None, dest="features_file",
                   help="FVEC file of imported per-frame features")


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_synth(args) -> int:
    spec = SynthSpec(identities=args.identities, frames=args.length,
                     period=args.period, noise=args.noise,
                     occlusion=args.occlusion, seed=args.seed or 0)
    result = generate_synthetic(spec)
    out = _out_dir(args.out)
    for seq in result.dataset.sequences:
        seq_dir = out / f"cam{seq.camera_id}" / seq.person_id
        seq_dir.mkdir(parents=True, exist_ok=True)
        for i, frame in enumerate(seq.frames):
            Image.fromarray(np.asarray(frame.pixels)).save(seq_dir / f"{i}.png")
    truth = {f"cam{c}/{p}": idx for (p, c), idx in result.extrema.items()}
    (out / "truth.json").write_text(json.dumps(truth, indent=2, sort_keys=True)
                                    + "\n")
    print(f"wrote {len(result.dataset.sequences)} sequences under {out}")
    return 0


def _find_sequence(dataset, seq_label: str):
    cam_str, _, person = seq_label.partition("/")
    camera = int(cam_str.removeprefix("cam") or -1)
    for seq in dataset.sequences:
        if seq.person_id == person and seq.camera_id == camera:
            return seq
    raise NotFound(f"sequence {seq_label!r} not found in dataset")


def _cmd_fep(args) -> int:
    dataset = load_dataset(args.data)
    seq = _find_sequence(dataset, args.seq)
    raw = compute_fep(seq).raw
    regulated = regulate_fep(raw, keep=DEFAULT_KEEP)
    out = _out_dir(args.out)
    for name, signal in (("fep_raw.csv", raw), ("fep_regulated.csv", regulated)):
        lines = ["frame_index,value"]
        lines += [f"{i},{v:.10f}" for i, v in enumerate(signal)]
        (out / name).write_text("\n".join(lines) + "\n")
    print(f"wrote {out / 'fep_raw.csv'} and {out / 'fep_regulated.csv'}")
    return 0


def _cmd_cycles(args) -> int:
    dataset = load_dataset(args.data)
    config = _resolve_config(args)
    strategy = SamplingStrategy(config.strategy, config.k)
    rng = RngHandle(config.seed)
    lines = ["camera,person,group,frame_index"]
    for idx, seq in enumerate(dataset.sequences):
        cycles = []
        if strategy.needs_cycles:
            try:
                cycles = detect_cycles(regulate_fep(compute_fep(seq).raw,
                                                    keep=DEFAULT_KEEP))
            except NoCycleFound:
                if strategy.variant == "representative":
                    raise
        groups = sample_frames(seq, cycles, strategy,
                               rng.child("sample", seq.camera_id,
                                         seq.person_id, idx))
        for g, group in enumerate(groups):
            lines += [f"{seq.camera_id},{seq.person_id},{g},{i}"
                      for i in group]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(lines) + "\n")
    print(f"wrote {out}")
    return 0


def _cmd_features(args) -> int:
    dataset = load_dataset(args.data)
    extractor = HandcraftedExtractor()
    vectors, keys = [], []
    for seq in dataset.sequences:
        for i, frame in enumerate(seq.frames):
            vectors.append(extractor.extract(frame))
            keys.append((seq.person_id, seq.camera_id, i))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_features(out, np.asarray(vectors, dtype=np.float32), keys)
    print(f"wrote {len(keys)} vectors of dim {extractor.dim} to {out}")
    return 0


def _cmd_pool(args) -> int:
    table = load_external_features(args.features_file)
    mode = POOLING_FLAGS[args.pooling]
    groups: dict[tuple[str, int, int], list] = {}
    for line in Path(args.groups).read_text().splitlines()[1:]:
        if not line.strip():
            continue
        cam, person, group, frame = line.split(",")
        key = (person, int(cam), int(group))
        groups.setdefault(key, []).append(
            table[(person, int(cam), int(frame))])
    vectors, keys = [], []
    for key in sorted(groups):
        vectors.append(pool(groups[key], mode))
        keys.append(key)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_features(out, np.asarray(vectors, dtype=np.float32), keys)
    print(f"wrote {len(keys)} pooled descriptors to {out}")
    return 0


def _cmd_train(args) -> int:
    dataset = load_dataset(args.data)
    config = _resolve_config(args)
    extractor = build_extractor(config)
    rng = RngHandle(config.seed)
    descriptors = []
    strategy = SamplingStrategy(config.strategy, config.k)
    fallback = SamplingStrategy("random_halves", config.k)
    for idx, seq in enumerate(dataset.sequences):
        child = rng.child("sample", seq.camera_id, seq.person_id, idx)
        try:
            descriptors.extend(describe_sequence(
                seq, strategy, extractor, config.pooling, child))
        except NoCycleFound:
            descriptors.extend(describe_sequence(
                seq, fallback, extractor, config.pooling, child))
    cameras = dataset.cameras()
    model = fit_trial_models(descriptors, config, cameras[0], cameras[-1],
                             rng.child("fit"))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out)
    print(f"wrote model (p={model.pca.p}, d={model.pca.d}) to {out}")
    return 0


def _write_report(report, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(render_report_text(report))
    (out / "cmc.csv").write_text(render_cmc_csv(report))
    (out / "cmc.svg").write_text(render_cmc_svg(report))
    (out / "config.lock").write_text(report.config.fingerprint())


def _cmd_eval(args) -> int:
    dataset = load_dataset(args.data)
    config = _resolve_config(args)
    report = run_evaluation(dataset, config)
    out = _out_dir(args.out)
    _write_report(report, out)
    summary = report.summary()
    print(f"rank-1 {summary[1]:.4f}  rank-5 {summary[5]:.4f}  "
          f"rank-20 {summary[20]:.4f}  ({len(report.per_trial)} trials)")
    print(f"report bundle written to {out}")
    return 0


def _cmd_sweep(args) -> int:
    dataset = load_dataset(args.data)
    config = _resolve_config(args)
    values = args.values.split(",")
    results = sweep(dataset, config, args.axis, values)
    out = _out_dir(args.out)
    grid = render_sweep_csv(args.axis, results)
    (out / "sweep.csv").write_text(grid)
    print(grid, end="")
    print(f"sweep grid written to {out / 'sweep.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reidpipe",
        description="walking-cycle person re-identification experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--identities", type=int, default=SynthSpec.identities)
    p.add_argument("--length", type=int, default=SynthSpec.frames,
                   help="frames per sequence")
    p.add_argument("--period", type=int, default=SynthSpec.period)
    p.add_argument("--noise", type=float, default=SynthSpec.noise)
    p.add_argument("--occlusion", type=float, default=SynthSpec.occlusion)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("fep", help="emit raw/regulated FEP signals")
    p.add_argument("--data", required=True)
    p.add_argument("--seq", required=True, help="sequence as camN/person")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fep)

    p = sub.add_parser("cycles", help="emit sampled frame groups")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_cycles)

    p = sub.add_parser("features", help="extract per-frame features to FVEC")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_features)

    p = sub.add_parser("pool", help="pool FVEC vectors by frame groups")
    p.add_argument("--features-file", required=True, dest="features_file")
    p.add_argument("--groups", required=True,
                   help="CSV from the cycles subcommand")
    p.add_argument("--out", required=True)
    p.add_argument("--pooling", choices=sorted(POOLING_FLAGS), default="max")
    p.set_defaults(func=_cmd_pool)

    p = sub.add_parser("train", help="fit PCA + metric, save the model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="run the evaluation protocol")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep", help="vary one config axis")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--axis", required=True,
                   choices=["frames", "pooling", "pca-dim", "measure",
                            "strategy", "metric"])
    p.add_argument("--values", required=True, help="comma-separated values")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ReidError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
