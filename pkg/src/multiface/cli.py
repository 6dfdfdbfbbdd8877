"""Command-line entry point: ``multiface <subcommand> ...``.

Exit codes: 0 success, 1 runtime/pipeline failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .bench import BenchConfig, run_scaling
from .core import (EmbeddingMap, Heatmap, LossConfig, MultifaceError, annotation_read,
                   read_groups, tensor_read, tensor_write, write_groups)
from .loss import fox_loss_grad, gradient_check, random_instance
from .meanshift import ClusterConfig
from .metrics import evaluate, write_report
from .nms import NmsConfig
from .pipeline import SyntheticScene, ToyTrainConfig, generate_scene, parse_faces, train_toy_embeddings

log = logging.getLogger("multiface")

GRAD_TOLERANCE = 1e-5


class UsageError(Exception):
    pass


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def _int_list(s: str) -> list[int]:
    try:
        return [int(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}")


def _default_seed() -> int:
    env = os.environ.get("FOX_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"FOX_SEED must be an integer, got {env!r}")


def _add_loss_flags(p: argparse.ArgumentParser) -> None:
    d = LossConfig()
    g = p.add_argument_group("loss")
    g.add_argument("--alpha", type=float, default=d.alpha)
    g.add_argument("--beta", type=float, default=d.beta)
    g.add_argument("--gamma", type=float, default=d.gamma)
    g.add_argument("--delta-v", type=float, default=d.delta_v)
    g.add_argument("--delta-d", type=float, default=d.delta_d)
    g.add_argument("--radius", type=float, default=d.radius)
    g.add_argument("--embed-dim", type=int, default=d.embed_dim)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    d = ToyTrainConfig()
    g = p.add_argument_group("toy training")
    g.add_argument("--steps", type=int, default=d.steps)
    g.add_argument("--lr", type=float, default=d.learning_rate)
    g.add_argument("--init-scale", type=float, default=d.init_scale)


def _add_parse_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("parsing")
    g.add_argument("--threshold", type=float, default=NmsConfig().threshold)
    g.add_argument("--nms-radius", type=int, default=NmsConfig().radius)
    g.add_argument("--bandwidth", type=float, default=None,
                   help="mean-shift bandwidth (default: --delta-v)")
    g.add_argument("--max-iter", type=int, default=ClusterConfig().max_iterations)
    g.add_argument("--merge-tol", type=float, default=None)


def _add_scene_flags(p: argparse.ArgumentParser, height: int = 64, width: int = 64) -> None:
    g = p.add_argument_group("scene")
    g.add_argument("--landmarks", type=_positive_int, default=5)
    g.add_argument("--height", type=_positive_int, default=height)
    g.add_argument("--width", type=_positive_int, default=width)


def build_parser() -> argparse.ArgumentParser:
    # accepted before or after the subcommand; SUPPRESS keeps an absent flag
    # from overwriting one given in the other position
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="RNG seed (default: $FOX_SEED, else 0)")
    common.add_argument("--print-config", action="store_true", default=argparse.SUPPRESS,
                        help="dump the resolved configuration as JSON and exit")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    parser = argparse.ArgumentParser(prog="multiface", description=__doc__.splitlines()[0],
                                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=lambda **kw: argparse.ArgumentParser(
                                    parents=[common], **kw))

    p = sub.add_parser("gradcheck", help="compare analytic loss gradients to finite differences")
    p.add_argument("--n", type=_positive_int, default=20)
    p.add_argument("--dim", type=_positive_int, default=8)
    p.add_argument("--clusters", type=_positive_int, default=3)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--step", type=float, default=1e-6)
    p.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    _add_loss_flags(p)

    p = sub.add_parser("synth", help="write a synthetic scene directory")
    p.add_argument("--faces", type=int, default=3)
    _add_scene_flags(p)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("train-toy", help="train free per-pixel embeddings on a scene")
    p.add_argument("--scene", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="embedding map FXT1 file")
    p.add_argument("--trace", type=Path, help="optional JSON file for the loss trace")
    _add_loss_flags(p)
    _add_train_flags(p)

    p = sub.add_parser("parse", help="group heatmap peaks into faces")
    p.add_argument("--heatmap", type=Path, required=True)
    p.add_argument("--embeddings", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_loss_flags(p)
    _add_parse_flags(p)

    p = sub.add_parser("eval", help="NME and detection F1 of parsed faces")
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--gt", type=Path, required=True)
    p.add_argument("--accept-frac", type=float, default=0.5)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("bench", help="runtime scaling with the number of faces")
    p.add_argument("--faces", type=_int_list, default=[1, 2, 4, 8, 16])
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--channels", type=_positive_int, default=8)
    p.add_argument("--blocks", type=int, default=2)
    p.add_argument("--skip-cluster", action="store_true")
    p.add_argument("--out", type=Path, help="CSV report path")
    p.add_argument("--json", type=Path, help="JSON summary path")
    _add_scene_flags(p, height=256, width=256)
    _add_loss_flags(p)
    _add_train_flags(p)
    _add_parse_flags(p)
    return parser


def _loss_cfg(a) -> LossConfig:
    return LossConfig(a.alpha, a.beta, a.gamma, a.delta_v, a.delta_d, a.radius, a.embed_dim)


def _train_cfg(a) -> ToyTrainConfig:
    loss = _loss_cfg(a)
    return ToyTrainConfig(a.steps, a.lr, loss, loss.embed_dim, a.seed, a.init_scale)


def _nms_cfg(a) -> NmsConfig:
    return NmsConfig(a.threshold, a.nms_radius)


def _cluster_cfg(a) -> ClusterConfig:
    h = a.bandwidth if a.bandwidth is not None else a.delta_v
    return ClusterConfig(bandwidth=h, max_iterations=a.max_iter, merge_tolerance=a.merge_tol)


def resolve_config(a) -> dict:
    cfg = {"command": a.command, "seed": a.seed}
    if hasattr(a, "alpha"):
        cfg["loss"] = asdict(_loss_cfg(a))
    if hasattr(a, "steps"):
        cfg["train"] = asdict(_train_cfg(a))
    if hasattr(a, "threshold"):
        cfg["nms"] = asdict(_nms_cfg(a))
        cfg["cluster"] = asdict(_cluster_cfg(a))
    consumed = {"command", "seed", "print_config", "verbose", "corrupt_gradient",
                "alpha", "beta", "gamma", "delta_v", "delta_d", "radius", "embed_dim",
                "steps", "lr", "init_scale", "threshold", "nms_radius", "bandwidth",
                "max_iter", "merge_tol"}
    for k, v in vars(a).items():
        if k not in consumed:
            cfg[k] = str(v) if isinstance(v, Path) else v
    return cfg


def cmd_gradcheck(a) -> int:
    if a.trials < 1:
        raise UsageError("--trials must be >= 1")
    if a.clusters > a.n:
        raise UsageError("--clusters must not exceed --n")
    cfg = _loss_cfg(a)
    rng = np.random.default_rng(a.seed)
    grad_fn = fox_loss_grad
    if a.corrupt_gradient:
        def grad_fn(e, c):
            return 1.01 * fox_loss_grad(e, c)
    worst = 0.0
    for _ in range(a.trials):
        e = random_instance(rng, a.n, a.dim, a.clusters, cfg)
        worst = max(worst, gradient_check(e, cfg, a.step, grad_fn))
    ok = worst < GRAD_TOLERANCE
    print(f"gradcheck: {a.trials} trials, n={a.n} D={a.dim} C={a.clusters}, "
          f"max relative error {worst:.3e} ({'PASS' if ok else 'FAIL'} at {GRAD_TOLERANCE:g})")
    return 0 if ok else 1


def cmd_synth(a) -> int:
    if a.faces < 0:
        raise UsageError("--faces must be >= 0")
    scene = generate_scene(a.faces, a.landmarks, a.height, a.width, a.seed)
    scene.save(a.out)
    print(f"wrote {scene.n_faces}-face scene to {a.out}")
    return 0


def cmd_train_toy(a) -> int:
    scene = SyntheticScene.load(a.scene)
    trace = []
    emb = train_toy_embeddings(scene, _train_cfg(a), trace)
    tensor_write(emb.to_tensor(), a.out)
    if a.trace:
        a.trace.write_text(json.dumps([t.to_json() for t in trace]))
    print(f"trained {a.steps} steps: l_fox {trace[0].l_fox:.6g} -> {trace[-1].l_fox:.6g}; "
          f"wrote {a.out}")
    return 0


def cmd_parse(a) -> int:
    heat = Heatmap.from_tensor(tensor_read(a.heatmap))
    emb = EmbeddingMap.from_tensor(tensor_read(a.embeddings))
    groups = parse_faces(heat, emb, _nms_cfg(a), _cluster_cfg(a))
    write_groups(groups, a.out)
    print(f"{len(groups)} faces, {sum(len(g.landmarks) for g in groups)} landmarks -> {a.out}")
    return 0


def cmd_eval(a) -> int:
    report = evaluate(read_groups(a.pred), annotation_read(a.gt), a.accept_frac)
    text = json.dumps(report, indent=1)
    if a.out:
        write_report(report, a.out)
    print(text)
    return 0


def cmd_bench(a) -> int:
    if a.repeats < 3:
        raise UsageError("--repeats must be >= 3")
    if not a.faces or min(a.faces) < 0:
        raise UsageError("--faces needs non-negative counts")
    cfg = BenchConfig(a.height, a.width, a.landmarks, a.channels, a.blocks, a.seed,
                      _nms_cfg(a), _cluster_cfg(a), _train_cfg(a), a.skip_cluster)
    report = run_scaling(a.faces, a.repeats, cfg)
    print(report.format())
    if a.out:
        report.write_csv(a.out)
    if a.json:
        report.write_json(a.json)
    return 0


COMMANDS = {
    "gradcheck": cmd_gradcheck,
    "synth": cmd_synth,
    "train-toy": cmd_train_toy,
    "parse": cmd_parse,
    "eval": cmd_eval,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)  # exits 2 on malformed arguments
    a.seed = getattr(a, "seed", None)
    a.print_config = getattr(a, "print_config", False)
    a.verbose = getattr(a, "verbose", False)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if a.seed is None:
            a.seed = _default_seed()
        try:
            resolved = resolve_config(a)  # builds every config, validating flag values
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        if a.print_config:
            print(json.dumps(resolved, indent=1))
            return 0
        return COMMANDS[a.command](a)
    except UsageError as exc:
        print(f"multiface {a.command}: error: {exc}", file=sys.stderr)
        return 2
    except (MultifaceError, ValueError, OSError, KeyError) as exc:
        print(f"multiface {a.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1

if __name__ == "__main__":
    sys.exit(main())
