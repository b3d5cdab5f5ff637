"""Command-line pipelines: transform, loss, diagnose, recover, synth.

Record-oriented commands read KITTI label/calib/velodyne files and
boxbelief.v1 detection JSON-lines, emit one JSON line per record in input
order, and report per-record failures as error.v1 lines.  The exit code is
0 only when no record failed (or --keep-going was given, in which case a
summary of the error count goes to stderr and the exit code stays 0).
All randomness is driven by an explicit --seed.
"""

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from . import synth as synth_mod
from .diagnostics import (
    DEFAULT_BIN_WIDTH,
    KLD_FLAG_THRESHOLD,
    diagnose_box,
    distance_binned_stats,
)
from .errors import BoxBeliefError, JoinError
from .geometry import corners_from_box
from .kitti_io import (
    CONVENTIONS,
    CalibMatrices,
    DetectionRecord,
    box_to_label,
    format_calib,
    label_to_box,
    parse_calib,
    parse_labels,
    read_detections,
    read_velodyne,
    velo_to_rect_cam,
    write_detections,
    write_velodyne,
)
from .loss import ensemble_loss
from .recovery import LOCATION_MODES, mc_variance_oracle, recover_box


def _add_output_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--output", default="-", help="output path for JSON lines ('-' = stdout)"
    )
    parser.add_argument(
        "--keep-going",
        action="store_true",
        help="exit 0 even when records fail (errors are still reported)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boxbelief",
        description="corner-based probabilistic 3D bounding-box toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transform", help="emit the 8 corners of labels or detections")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--labels", type=Path, help="KITTI label file or directory")
    source.add_argument("--detections", type=Path, help="boxbelief.v1 JSON-lines file")
    p.add_argument("--convention", choices=CONVENTIONS, default="kitti_ry")
    _add_output_options(p)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("loss", help="ensemble corner loss of detections against labels")
    p.add_argument("--labels", type=Path, required=True)
    p.add_argument("--detections", type=Path, required=True)
    p.add_argument("--convention", choices=CONVENTIONS, default="kitti_ry")
    _add_output_options(p)
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("diagnose", help="per-box uncertainty diagnostics + binned CSV")
    p.add_argument("--detections", type=Path, required=True)
    p.add_argument("--clouds", type=Path, required=True, help="directory of <frame>.bin scans")
    p.add_argument("--calib", type=Path, required=True, help="calib file or directory")
    p.add_argument("--labels", type=Path, required=True, help="label file or directory")
    p.add_argument("--convention", choices=CONVENTIONS, default="kitti_ry")
    p.add_argument("--margin", type=float, default=0.0, help="box membership margin (m)")
    p.add_argument("--bin-width", type=float, default=DEFAULT_BIN_WIDTH)
    p.add_argument("--kld-threshold", type=float, default=KLD_FLAG_THRESHOLD)
    p.add_argument(
        "--uncertainty-scale",
        choices=("std", "variance"),
        default="std",
        help="normalize the corner-uncertainty profile on std or variance scale",
    )
    p.add_argument("--bins-csv", type=Path, help="write binned variance stats here")
    _add_output_options(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("recover", help="recover box-parameter means and variances")
    p.add_argument("--detections", type=Path, required=True)
    p.add_argument("--mode", choices=LOCATION_MODES, default="verbatim")
    p.add_argument(
        "--oracle",
        type=int,
        metavar="N",
        help="append Monte Carlo oracle variances from N draws (requires --seed)",
    )
    p.add_argument("--seed", type=int, help="base seed for the oracle")
    _add_output_options(p)
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("synth", help="generate a synthetic scene directory")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n-boxes", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--range-min", type=float, default=8.0)
    p.add_argument("--range-max", type=float, default=50.0)
    p.add_argument("--points-density", type=float, default=60.0,
                   help="points per square meter at 10 m range")
    p.add_argument("--noise-b-near", type=float, default=0.02)
    p.add_argument("--noise-b-far", type=float, default=0.05)
    p.add_argument("--n-observations", type=int, default=200)
    p.add_argument("--belief", choices=("fitted", "true"), default="fitted",
                   help="write MLE-fitted or generating diversities into detections")
    p.add_argument("--convention", choices=CONVENTIONS, default="verbatim")
    p.set_defaults(func=cmd_synth)

    return parser


def _error_record(frame: str, index, message: str) -> dict:
    record = {"schema": "error.v1", "frame": frame, "error": message}
    if index is not None:
        record["index"] = index
    return record


def _emit(lines: list[dict], output: str) -> None:
    text = "".join(json.dumps(line, sort_keys=True) + "\n" for line in lines)
    if output == "-":
        sys.stdout.write(text)
    else:
        Path(output).write_text(text)


def _finish(lines: list[dict], errors: int, args) -> int:
    _emit(lines, args.output)
    if errors:
        print(f"{errors} record error(s)", file=sys.stderr)
    return 0 if errors == 0 or args.keep_going else 1


def _labels_by_frame(path: Path) -> dict[str, list]:
    files = sorted(path.glob("*.txt")) if path.is_dir() else [path]
    return {f.stem: parse_labels(f.read_text()) for f in files}


def _load_detections(path: Path) -> list[DetectionRecord]:
    return read_detections(path.read_text())


def cmd_transform(args) -> int:
    lines: list[dict] = []
    errors = 0
    if args.labels is not None:
        for frame, labels in sorted(_labels_by_frame(args.labels).items()):
            for index, label in enumerate(labels):
                if label.is_dontcare:
                    continue
                try:
                    box = label_to_box(label, args.convention)
                    lines.append(
                        {
                            "schema": "corners.v1",
                            "frame": frame,
                            "index": index,
                            "category": label.type,
                            "convention": args.convention,
                            "corners": corners_from_box(box).corners.tolist(),
                        }
                    )
                except BoxBeliefError as exc:
                    errors += 1
                    lines.append(_error_record(frame, index, str(exc)))
    else:
        for index, det in enumerate(_load_detections(args.detections)):
            lines.append(
                {
                    "schema": "corners.v1",
                    "frame": det.frame,
                    "index": index,
                    "score": det.score,
                    "corners": corners_from_box(det.box).corners.tolist(),
                }
            )
    return _finish(lines, errors, args)


def cmd_loss(args) -> int:
    labels_by_frame = _labels_by_frame(args.labels)
    usable = {
        frame: [lab for lab in labels if not lab.is_dontcare]
        for frame, labels in labels_by_frame.items()
    }
    cursor: dict[str, int] = {}
    lines: list[dict] = []
    errors = 0
    for det in _load_detections(args.detections):
        position = cursor.get(det.frame, 0)
        cursor[det.frame] = position + 1
        try:
            if det.frame not in usable:
                raise JoinError(f"no label file for frame {det.frame!r}")
            if position >= len(usable[det.frame]):
                raise JoinError(
                    f"frame {det.frame!r} has {len(usable[det.frame])} labels "
                    f"but more detections"
                )
            gt_box = label_to_box(usable[det.frame][position], args.convention)
            value = ensemble_loss(corners_from_box(gt_box), det.belief)
            lines.append(
                {
                    "schema": "loss.v1",
                    "frame": det.frame,
                    "index": position,
                    "convention": args.convention,
                    "total": value.total,
                    "per_component": value.per_component.tolist(),
                }
            )
        except BoxBeliefError as exc:
            errors += 1
            lines.append(_error_record(det.frame, position, str(exc)))
    return _finish(lines, errors, args)


def _calib_for_frame(calib_path: Path, frame: str, cache: dict) -> CalibMatrices:
    key = frame if calib_path.is_dir() else "*"
    if key not in cache:
        path = calib_path / f"{frame}.txt" if calib_path.is_dir() else calib_path
        cache[key] = parse_calib(path.read_text())
    return cache[key]


def cmd_diagnose(args) -> int:
    labels_by_frame = _labels_by_frame(args.labels)
    calib_cache: dict = {}
    gt_cache: dict[str, tuple] = {}
    lines: list[dict] = []
    reports = []
    errors = 0
    cursor: dict[str, int] = {}
    for det in _load_detections(args.detections):
        position = cursor.get(det.frame, 0)
        cursor[det.frame] = position + 1
        try:
            cloud_path = args.clouds / f"{det.frame}.bin"
            if not cloud_path.exists():
                raise JoinError(f"missing cloud file {cloud_path}")
            calib = _calib_for_frame(args.calib, det.frame, calib_cache)
            cloud = velo_to_rect_cam(read_velodyne(cloud_path.read_bytes()), calib)
            if det.frame not in gt_cache:
                gt_cache[det.frame] = tuple(
                    label_to_box(lab, args.convention)
                    for lab in labels_by_frame.get(det.frame, [])
                    if not lab.is_dontcare
                )
            report = diagnose_box(
                det.box,
                det.belief,
                cloud,
                gt_boxes=gt_cache[det.frame],
                margin=args.margin,
                scale=args.uncertainty_scale,
            )
            reports.append(report)
            record = {
                "schema": "diagnostics.v1",
                "frame": det.frame,
                "index": position,
                "convention": args.convention,
                "flagged": report.kld_ud > args.kld_threshold,
            }
            record.update(report.to_json_dict())
            lines.append(record)
        except BoxBeliefError as exc:
            errors += 1
            lines.append(_error_record(det.frame, position, str(exc)))
    if args.bins_csv is not None:
        _write_bins_csv(args.bins_csv, reports, args.bin_width)
    return _finish(lines, errors, args)


def _write_bins_csv(path: Path, reports, bin_width: float) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(
        [
            "bin_lower",
            "bin_upper",
            "count",
            "mean_var_x",
            "mean_var_y",
            "mean_var_z",
            "std_var_x",
            "std_var_y",
            "std_var_z",
        ]
    )
    for stat in distance_binned_stats(reports, bin_width):
        writer.writerow(
            [stat.lower, stat.upper, stat.count]
            + [repr(float(v)) for v in stat.mean_variance]
            + [repr(float(v)) for v in stat.std_variance]
        )
    path.write_text(buffer.getvalue())


def cmd_recover(args) -> int:
    if args.oracle is not None and args.seed is None:
        print("--oracle requires --seed", file=sys.stderr)
        return 2
    lines: list[dict] = []
    errors = 0
    for index, det in enumerate(_load_detections(args.detections)):
        try:
            recovered = recover_box(det.belief.corner_set(), det.belief, mode=args.mode)
            record = {"schema": "recovered.v1", "frame": det.frame}
            record.update(recovered.to_json_dict())
            if args.oracle is not None:
                oracle = mc_variance_oracle(
                    det.box, det.belief, args.oracle, seed=args.seed + index
                )
                record["oracle_samples"] = args.oracle
                record["oracle_variances"] = {
                    name: float(oracle[i])
                    for i, name in enumerate(("x", "y", "z", "h", "w", "l", "psi"))
                }
            lines.append(record)
        except BoxBeliefError as exc:
            errors += 1
            lines.append(_error_record(det.frame, index, str(exc)))
    return _finish(lines, errors, args)


def cmd_synth(args) -> int:
    spec = synth_mod.SceneSpec(
        n_boxes=args.n_boxes,
        range_min=args.range_min,
        range_max=args.range_max,
        points_per_m2_at_10m=args.points_density,
        noise_b_near=args.noise_b_near,
        noise_b_far=args.noise_b_far,
        n_observations=args.n_observations,
        seed=args.seed,
    )
    samples = synth_mod.sample_scene(spec)

    out: Path = args.out
    for sub in ("velodyne", "calib", "label_2"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    calib_text = format_calib(CalibMatrices.identity())

    detections = []
    for i, sample in enumerate(samples):
        frame = f"{i:06d}"
        (out / "velodyne" / f"{frame}.bin").write_bytes(write_velodyne(sample.cloud))
        (out / "calib" / f"{frame}.txt").write_text(calib_text)
        label = box_to_label(sample.gt_box, convention=args.convention)
        (out / "label_2" / f"{frame}.txt").write_text(label.to_line() + "\n")
        if args.belief == "fitted":
            belief_b = synth_mod.fit_observation_belief(sample).b
        else:
            belief_b = sample.true_belief.b
        detections.append(
            DetectionRecord.make(frame=frame, box=sample.gt_box, b=belief_b, score=1.0)
        )
    (out / "detections.jsonl").write_text(write_detections(detections))
    print(f"wrote {len(samples)} frame(s) under {out}", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BoxBeliefError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
