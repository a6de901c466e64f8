"""Command line: train, eval, export, fetch, gen-yinyang, report."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import gzip
import hashlib
import json
import logging
import os
import shutil
import sys
import tempfile
import urllib.request
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import config as cfgmod
from . import hard, kernels, model, train
from .datasets import BitDataset, IdxError, data_dir, load_idx_dataset, yinyang_dataset, generate_yinyang

log = logging.getLogger("lgn")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_IO = 5

# gzip file checksums as published with the datasets (md5)
FETCH_SOURCES = {
    "mnist": {
        "base_url": "https://ossci-datasets.s3.amazonaws.com/mnist/",
        "files": {
            "train-images-idx3-ubyte.gz": "f68b3c2dcbeaaa9fbdd348bbdeb94873",
            "train-labels-idx1-ubyte.gz": "d53e105ee54ea40749a09fcbcd1e9432",
            "t10k-images-idx3-ubyte.gz": "9fb629c4189551a2d022fa330f9573f3",
            "t10k-labels-idx1-ubyte.gz": "ec29112dd5afa0611ce80d1b7f02629c",
        },
    },
    "fashion-mnist": {
        "base_url": "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/",
        "files": {
            "train-images-idx3-ubyte.gz": "8d4fb7e6c68d591d4c3dfef9ec88bf0d",
            "train-labels-idx1-ubyte.gz": "25c81989df183df01b3e8a0aad5dffbe",
            "t10k-images-idx3-ubyte.gz": "bef4ecab320f06d8554ea6380940ec79",
            "t10k-labels-idx1-ubyte.gz": "bb300cfdad3c16e7a12a480ee83cd310",
        },
    },
}


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# ----------------------------------------------------------------------------
# data


def load_data(cfg: cfgmod.RunConfig) -> tuple[BitDataset, BitDataset]:
    if cfg.dataset == "yinyang":
        kw = dict(bits_per_coord=cfg.bits_per_coord, encoding=cfg.encoding)
        return (
            yinyang_dataset(cfg.train_size, cfg.train_seed, **kw),
            yinyang_dataset(cfg.test_size, cfg.test_seed, **kw),
        )
    directory = Path(cfg.data_dir) if cfg.data_dir else data_dir() / cfg.dataset
    thr = cfg.effective_thresholds()
    try:
        return (
            load_idx_dataset(cfg.dataset, "train", directory, thr),
            load_idx_dataset(cfg.dataset, "test", directory, thr),
        )
    except FileNotFoundError as e:
        raise CliError(f"{e}; run `lgn fetch {cfg.dataset}` or set LGN_DATA_DIR", EXIT_DATA) from None
    except IdxError as e:
        raise CliError(f"cannot parse {cfg.dataset} files: {e}", EXIT_DATA) from None


def _resolve_config(args) -> cfgmod.RunConfig:
    if args.preset and args.config:
        raise CliError("use either --preset or --config", EXIT_CONFIG)
    if args.resume and not (args.preset or args.config):
        cfg = _config_from_checkpoint(ckpt.load(args.resume), None)
    elif args.preset:
        cfg = cfgmod.load_preset(args.preset)
    elif args.config:
        try:
            cfg = cfgmod.load_config(args.config)
        except OSError as e:
            raise CliError(f"cannot read config: {e}", EXIT_CONFIG) from None
    else:
        cfg = cfgmod.RunConfig()
    cfg = cfgmod.apply_overrides(cfg, args.set or [])
    if args.out:
        cfg.out_dir = args.out
    if not cfg.out_dir:
        cfg.out_dir = str(Path("runs") / cfg.name)
    cfg.validate()
    return cfg


# ----------------------------------------------------------------------------
# train


def _dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True)


def record_config(cfg: cfgmod.RunConfig) -> dict:
    """Config as stored in checkpoints and metrics; output paths are left out
    so identical runs produce identical files wherever they are written."""
    d = cfg.as_dict()
    d.pop("out_dir", None)
    return d


def _metrics_before(path: Path, epoch: int) -> list[str]:
    """Header and epoch records preceding ``epoch`` from an earlier run."""
    if not path.exists():
        return []
    kept = []
    for line in path.read_text(encoding="utf-8").splitlines():
        rec = json.loads(line)
        if rec.get("type") == "run" or (rec.get("type") == "epoch" and rec["epoch"] < epoch):
            kept.append(line)
    return kept


def run_training(cfg: cfgmod.RunConfig, resume: str | None = None, quiet: bool = False) -> dict:
    """Build, train and persist one configuration; returns the final record."""
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_set, test_set = load_data(cfg)
    arch = cfg.architecture()
    if train_set.input_width != arch.input_width:
        raise CliError(
            f"dataset width {train_set.input_width} does not match configured input width {arch.input_width}",
            EXIT_DATA,
        )
    plan = cfg.plan()
    start_epoch = 0
    if resume:
        ck = ckpt.load(resume)
        net = ck.net
        start_epoch = ck.epoch
        opt = ckpt.restore_optimizer(net, plan, ck.optimizer)
    else:
        net = model.build_network(arch, cfg.seed)
        opt = train.make_optimizer(net, plan)

    metrics_path = out / "metrics.jsonl"
    provenance = {"train": train_set.meta, "test": test_set.meta}
    header = {
        "type": "run",
        "name": cfg.name,
        "config": record_config(cfg),
        "dataset": provenance,
        "widths": net.widths,
        "n_candidates": [layer.conn.n_candidates for layer in net.layers],
        "head_tau": net.head_tau,
        "kernel_backend": kernels.BACKEND,
        "start_epoch": start_epoch,
    }
    kept = _metrics_before(metrics_path, start_epoch) if resume else []
    with open(metrics_path, "w", encoding="utf-8", newline="\n") as mf:
        for line in kept or [_dumps(header)]:
            mf.write(line + "\n")

        def make_ck(epoch, n, o):
            return ckpt.Checkpoint(
                n, epoch, ckpt.optimizer_state(o), dataclasses.asdict(plan), provenance, cfg.seed, record_config(cfg)
            )

        def on_epoch(m: train.EpochMetrics, n, o):
            rec = dict(m.as_record(), type="epoch")
            mf.write(_dumps(rec) + "\n")
            mf.flush()
            if not quiet:
                print(
                    f"epoch {m.epoch:4d}  loss {m.train_loss:.4f}  train {m.train_accuracy:.4f}  "
                    f"test {m.test_accuracy:.4f}  hard {m.hard_test_accuracy:.4f}  "
                    f"T_c {m.t_c:.3g}  T_g {m.t_g:.3g}",
                    flush=True,
                )
            done = m.epoch + 1
            if cfg.checkpoint_every and done % cfg.checkpoint_every == 0 and done < plan.epochs:
                ckpt.save(make_ck(done, n, o), out / f"checkpoint_e{done:04d}.lgn")

        try:
            net, _ = train.train(net, plan, train_set, test_set, start_epoch=start_epoch, optimizer=opt, on_epoch=on_epoch)
        except (train.DivergenceError, model.NumericError) as e:
            raise CliError(f"training diverged: {e}", EXIT_NUMERIC) from None

        soft_acc = train.evaluate(net, test_set, "soft")
        hard_net = hard.discretize(net)
        hard_acc = float((hard.predict_hard(hard_net, test_set.inputs) == test_set.labels).mean())
        final = {
            "type": "final",
            "soft_test_accuracy": soft_acc,
            "hard_test_accuracy": hard_acc,
            "gates": hard_net.n_gates,
            "softmax_maxima": train.softmax_maxima(net),
        }
        mf.write(_dumps(final) + "\n")
    ckpt.save(make_ck(plan.epochs, net, opt), out / "checkpoint.lgn")
    return final


def cmd_train(args) -> int:
    if args.list_presets:
        print("\n".join(cfgmod.preset_names()))
        return EXIT_OK
    cfg = _resolve_config(args)
    final = run_training(cfg, resume=args.resume, quiet=args.quiet)
    print(f"soft test accuracy {final['soft_test_accuracy']:.4f}")
    print(f"hard test accuracy {final['hard_test_accuracy']:.4f}")
    print(f"checkpoint {Path(cfg.out_dir) / 'checkpoint.lgn'}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# eval / export


def _config_from_checkpoint(ck: ckpt.Checkpoint, args) -> cfgmod.RunConfig:
    cfg = cfgmod.RunConfig(**{k: v for k, v in ck.config.items() if k in {f.name for f in dataclasses.fields(cfgmod.RunConfig)}})
    cfg.out_dir = ""
    if getattr(args, "dataset", None):
        cfg.dataset = args.dataset
        cfg.thresholds = []
    if getattr(args, "data_dir", None):
        cfg.data_dir = args.data_dir
    if getattr(args, "set", None):
        cfg = cfgmod.apply_overrides(cfg, args.set)
    return cfg


def cmd_eval(args) -> int:
    ck = ckpt.load(args.checkpoint)
    cfg = _config_from_checkpoint(ck, args)
    train_set, test_set = load_data(cfg)
    data = test_set if args.split == "test" else train_set
    try:
        acc = train.evaluate(ck.net, data, "hard" if args.hard else "soft")
    except model.ShapeError as e:
        raise CliError(f"shape mismatch: {e}", EXIT_DATA) from None
    print(f"{'hard' if args.hard else 'soft'} {args.split} accuracy {acc:.4f}")
    return EXIT_OK


def cmd_export(args) -> int:
    ck = ckpt.load(args.checkpoint)
    net = hard.discretize(ck.net)
    before = net.widths
    if args.optimize:
        net = hard.optimize_netlist(net)
    after = net.widths
    out = Path(args.output) if args.output else Path(args.checkpoint).with_suffix(".netlist")
    try:
        hard.export_netlist(net, out)
    except OSError as e:
        raise CliError(f"cannot write netlist: {e}", EXIT_IO) from None
    print("layer  gates_before  gates_after")
    for i, (b, a) in enumerate(zip(before, after)):
        print(f"{i:5d}  {b:12d}  {a:11d}")
    print(f"total  {sum(before):12d}  {sum(after):11d}")
    print(f"netlist {out}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# fetch


def _md5(path: Path) -> str:
    h = hashlib.md5()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def fetch_dataset(name: str, directory: Path, base_url: str | None = None, checksums: dict | None = None) -> list[str]:
    """Download and verify IDX files; returns the names actually downloaded."""
    if name not in FETCH_SOURCES:
        raise CliError(f"unknown dataset {name!r} (choose from {', '.join(FETCH_SOURCES)})", EXIT_CONFIG)
    src = FETCH_SOURCES[name]
    files = checksums or src["files"]
    base = base_url or src["base_url"]
    if not base.endswith("/"):
        base += "/"
    directory.mkdir(parents=True, exist_ok=True)
    fetched = []
    for fname, digest in sorted(files.items()):
        dest = directory / fname
        if dest.exists() and _md5(dest) == digest:
            continue
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=fname + ".", suffix=".part")
        os.close(fd)
        tmp_path = Path(tmp)
        try:
            with urllib.request.urlopen(base + fname, timeout=60) as r, open(tmp_path, "wb") as f:
                shutil.copyfileobj(r, f)
        except OSError as e:
            tmp_path.unlink(missing_ok=True)
            raise CliError(f"download of {fname} failed: {e}", EXIT_DATA) from None
        got = _md5(tmp_path)
        if got != digest:
            tmp_path.unlink(missing_ok=True)
            dest.unlink(missing_ok=True)
            raise CliError(f"checksum mismatch for {fname}: expected {digest}, got {got}", EXIT_DATA)
        tmp_path.replace(dest)
        fetched.append(fname)
    return fetched


def cmd_fetch(args) -> int:
    directory = Path(args.data_dir) if args.data_dir else data_dir() / args.dataset
    checksums = None
    if args.checksums:
        checksums = json.loads(Path(args.checksums).read_text())
    got = fetch_dataset(args.dataset, directory, args.base_url, checksums)
    if got:
        print(f"fetched {len(got)} file(s) into {directory}")
    else:
        print(f"{args.dataset}: all files present and verified in {directory}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# gen-yinyang / report


def cmd_gen_yinyang(args) -> int:
    xs, ys, labels = generate_yinyang(args.n, args.seed, args.r_small, args.r_big)
    ds = yinyang_dataset(
        args.n, args.seed, bits_per_coord=args.bits, encoding=args.encoding, r_small=args.r_small, r_big=args.r_big
    )
    out = Path(args.output)
    with open(out, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["x", "y", "label", "bits"])
        for x, y, c, bits in zip(xs, ys, labels, ds.inputs):
            w.writerow([repr(float(x)), repr(float(y)), int(c), "".join(map(str, bits))])
    print(f"wrote {args.n} samples to {out}")
    return EXIT_OK


def read_metrics(path) -> dict:
    run, final, epochs = None, None, []
    with open(path, encoding="utf-8") as f:
        for line in f:
            rec = json.loads(line)
            if rec.get("type") == "run":
                run = rec
            elif rec.get("type") == "final":
                final = rec
            elif rec.get("type") == "epoch":
                epochs.append(rec)
    if run is None:
        raise CliError(f"{path}: no run header record", EXIT_DATA)
    return {"run": run, "final": final, "epochs": epochs}


def report_rows(paths) -> list[dict]:
    rows = []
    for p in paths:
        m = read_metrics(p)
        run, final = m["run"], m["final"] or {}
        ncs = run["n_candidates"]
        rows.append(
            {
                "run": run["name"],
                "dataset": run["config"]["dataset"],
                "n_c": "full" if any(nc == w for nc, w in zip(ncs[1:], run["widths"][:-1])) and len(ncs) > 1 else ncs[-1],
                "layers": len(run["widths"]),
                "gates_per_layer": run["widths"][0],
                "gates": sum(run["widths"]),
                "soft_acc": final.get("soft_test_accuracy"),
                "hard_acc": final.get("hard_test_accuracy"),
            }
        )
    rows.sort(key=lambda r: (r["dataset"], str(r["n_c"]), r["gates_per_layer"], r["layers"]))
    return rows


def cmd_report(args) -> int:
    paths = []
    for p in args.paths:
        p = Path(p)
        paths.extend(sorted(p.rglob("metrics.jsonl")) if p.is_dir() else [p])
    rows = report_rows(paths)
    cols = ["dataset", "n_c", "gates_per_layer", "layers", "gates", "hard_acc", "soft_acc", "run"]
    out = sys.stdout if not args.output else open(args.output, "w", newline="")
    try:
        w = csv.writer(out, delimiter="\t", lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([("" if r[c] is None else (f"{r[c]:.4f}" if isinstance(r[c], float) else r[c])) for c in cols])
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


# ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lgn", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a network and write checkpoint + metrics")
    t.add_argument("--preset", help="named preset (see --list-presets)")
    t.add_argument("--config", help="config file of key = value lines")
    t.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    t.add_argument("--out", help="output directory (default runs/<name>)")
    t.add_argument("--resume", help="continue from a checkpoint")
    t.add_argument("--quiet", action="store_true", help="no per-epoch lines")
    t.add_argument("--list-presets", action="store_true", help="print preset names and exit")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("checkpoint", help="checkpoint file (.lgn)")
    e.add_argument("--hard", action="store_true", help="discretize before evaluating")
    e.add_argument("--split", choices=["test", "train"], default="test", help="default: test")
    e.add_argument("--dataset", choices=list(cfgmod.DATASETS), help="default: the dataset the checkpoint was trained on")
    e.add_argument("--data-dir", help="directory holding the IDX files")
    e.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a data config key")
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("export", help="discretize and write a netlist")
    x.add_argument("checkpoint", help="checkpoint file (.lgn)")
    x.add_argument("--optimize", action="store_true", help="fold constants, merge duplicates, drop dead gates")
    x.add_argument("-o", "--output", help="netlist file (default: <checkpoint>.netlist)")
    x.set_defaults(func=cmd_export)

    f = sub.add_parser("fetch", help="download IDX dataset files and verify checksums")
    f.add_argument("dataset", choices=sorted(FETCH_SOURCES))
    f.add_argument("--data-dir", help="target directory (default: $LGN_DATA_DIR/<dataset>)")
    f.add_argument("--base-url", help="mirror to download from")
    f.add_argument("--checksums", help="JSON file mapping file name to md5")
    f.set_defaults(func=cmd_fetch)

    g = sub.add_parser("gen-yinyang", help="write a Yin-Yang dataset as CSV")
    g.add_argument("-n", type=int, default=10_000, help="number of samples")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--bits", type=int, default=12, help="bits per coordinate")
    g.add_argument("--encoding", choices=["binary", "thermometer"], default="binary")
    g.add_argument("--r-small", type=float, default=0.1)
    g.add_argument("--r-big", type=float, default=0.5)
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_gen_yinyang)

    r = sub.add_parser("report", help="accuracy-vs-layers table from metrics files")
    r.add_argument("paths", nargs="+", help="metrics.jsonl files or directories")
    r.add_argument("-o", "--output", help="TSV file (default: stdout)")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except model.ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ckpt.CheckpointError as e:
        print(f"checkpoint error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (model.ShapeError,) as e:
        print(f"shape error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
