"""Command-line entry point: train, attack, learn-mask, analyze, demo, probe.

Settings come from built-in defaults, then an optional ``--config`` file of
``key=value`` lines ('#' starts a comment), then explicit flags.  Every run
writes the resolved settings to ``config.txt`` in its output directory,
along with ``summary.json`` and ``manifest.json``.  The output directory
defaults to ``$FREQMASK_OUT/<command>`` (``FREQMASK_OUT`` defaults to ``runs``).

Exit codes: 0 ok, 1 a checked property failed, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import io
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis, report, theory
from .data import AugmentPolicy, dataset_from_source, generate_synthetic, load_idx
from .masks import (Mask, MaskLearnConfig, complementary_mask, filtered_accuracy, learn_mask_global,
                    learn_masks_per_image, suppressed_fraction)
from .model import Checkpoint
from .spectral import band_energy, fftshift, make_bands
from .training import TrainConfig, evaluate, pgd_attack, train

log = logging.getLogger("freqmask")

OUT_ENV = "FREQMASK_OUT"


class UsageError(Exception):
    pass


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _opt_int(v):
    return None if v in (None, "", "none") else int(v)


# key -> (type, default, help); flags are --key with '_' written as '-'
SETTINGS = {
    "train": {
        "synthetic": (_bool, False, "use the synthetic grating/blob dataset"),
        "idx_images": (str, "", "IDX image file"),
        "idx_labels": (str, "", "IDX label file"),
        "classes": (str, "", "comma separated class whitelist for IDX data"),
        "cap": (_opt_int, None, "images per class kept from IDX data"),
        "num_classes": (int, 5, "synthetic classes"),
        "n_per_class": (int, 200, "synthetic images per class"),
        "data_seed": (int, 0, "seed of data generation and train/val split"),
        "augment": (str, "none", "none|adversarial|translate|rotate|scale"),
        "eps": (float, 0.1, "adversarial radius (pixel units)"),
        "alpha": (float, 0.02, "adversarial step"),
        "steps": (int, 10, "adversarial steps"),
        "translate_max": (int, 4, "max shift in pixels"),
        "rotate_max": (float, 30.0, "max rotation in degrees"),
        "scale_min": (float, 0.8, "min zoom"),
        "scale_max": (float, 1.2, "max zoom"),
        "epochs": (int, 20, "training epochs"),
        "max_lr": (float, 1e-3, "one-cycle peak learning rate"),
        "batch_size": (int, 64, "minibatch size"),
        "seed": (int, 0, "training seed"),
    },
    "attack": {
        "checkpoint": (str, "", "model to attack"),
        "eval_checkpoint": (str, "", "optional second model evaluated on the attacked set"),
        "eps": (float, 0.1, "L-inf radius in pixel units"),
        "alpha": (float, 0.02, "step size"),
        "steps": (int, 10, "PGD iterations"),
        "limit": (_opt_int, None, "attack only the first N validation images"),
    },
    "learn-mask": {
        "checkpoint": (str, "", "frozen model"),
        "scope": (str, "global", "global|per-image"),
        "images": (str, "", "directory with images.npy/labels.npy/ids.npy (default: validation split)"),
        "limit": (_opt_int, None, "use only the first N images"),
        "lambda": (float, 1e-3, "sparsity weight"),
        "p": (int, 1, "norm order 1 or 2"),
        "lr": (float, 1e-3, "Adam learning rate"),
        "max_iter": (int, 2000, "iteration cap"),
        "batch_size": (_opt_int, None, "global scope minibatch size"),
        "tol": (float, 1e-6, "improvement tolerance"),
        "patience": (int, 50, "iterations over which improvement is measured"),
        "tag": (str, "N", "model tag stored with per-image masks (N|A|S|T|R)"),
        "seed": (int, 0, "seed"),
    },
    "analyze": {
        "masks_a": (str, "", "mask file or directory (condition of interest)"),
        "masks_b": (str, "", "mask file or directory (reference condition)"),
        "bands": (str, "radial", "radial|angular"),
        "k": (int, 8, "number of bands"),
        "seed": (int, 0, "probe seed"),
        "expect_low_band": (_bool, False, "fail unless exceed fraction > 0.5 in band 0 and < 0.5 in band K-1"),
    },
    "demo": {
        "which": (str, "", "blue-shift|intermodulation|sinc|selfconv"),
        "nl": (str, "all", "nonlinearity for blue-shift (or all)"),
        "freq": (int, 8, "tone frequency for blue-shift"),
        "w1": (int, 5, "first intermodulation tone"),
        "w2": (int, 3, "second intermodulation tone"),
        "n": (int, 256, "signal length"),
        "a": (float, 1.0, "half-width of the translation box"),
        "k": (int, 2, "self-convolution order"),
        "seed": (int, 0, "seed of the random self-convolution signal"),
    },
    "probe": {
        "masks": (str, "", "directory of per-image masks"),
        "seed": (int, 0, "split and shuffle seed"),
    },
}


def read_config_file(path) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def resolve(command: str, args: argparse.Namespace) -> dict:
    table = SETTINGS[command]
    cfg = {k: default for k, (_, default, _) in table.items()}
    if args.config:
        for key, raw in read_config_file(args.config).items():
            if key not in table:
                raise UsageError(f"unknown key {key!r} in {args.config} for {command}")
            cfg[key] = raw
    for key in table:
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    out = {}
    for key, (typ, _, _) in table.items():
        try:
            out[key] = cfg[key] if cfg[key] is None else typ(cfg[key])
        except ValueError as exc:
            raise UsageError(f"bad value for {key}: {exc}") from None
    return out


def config_text(cfg: dict) -> str:
    return "".join(f"{k}={'' if v is None else v}\n" for k, v in sorted(cfg.items()))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="freqmask", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, table in SETTINGS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", help="key=value settings file")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV}/{command})")
        for key, (typ, default, helptext) in table.items():
            flag = "--" + key.replace("_", "-")
            if command == "demo" and key == "which":
                p.add_argument("which", nargs="?", default=None, help=helptext)
            elif typ is _bool:
                p.add_argument(flag, dest=key, action="store_const", const=True, default=None, help=helptext)
            else:
                p.add_argument(flag, dest=key, default=None, help=f"{helptext} (default {default})")
    return parser


def _out_dir(command: str, args) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get(OUT_ENV, "runs")) / command


def _finish(out: Path, command: str, cfg: dict, summary: dict, inputs=()):
    report.atomic_write_bytes(out / "config.txt", config_text(cfg).encode())
    report.write_summary(out / "summary.json", command, summary)
    report.write_manifest(out, command, cfg, inputs, seeds={k: v for k, v in cfg.items() if "seed" in k})


def _load_checkpoint(path) -> Checkpoint:
    if not path:
        raise UsageError("--checkpoint is required")
    return Checkpoint.load(path)


def _split_for(ckpt: Checkpoint):
    return dataset_from_source(ckpt.metadata)


def _save_images(directory: Path, x, y, ids):
    directory.mkdir(parents=True, exist_ok=True)
    for name, arr in (("images", x), ("labels", y), ("ids", ids)):
        buf = io.BytesIO()
        np.save(buf, np.ascontiguousarray(arr))
        report.atomic_write_bytes(directory / f"{name}.npy", buf.getvalue())


def _load_images(directory):
    d = Path(directory)
    return (np.load(d / "images.npy"), np.load(d / "labels.npy"), np.load(d / "ids.npy"))


# ---------------------------------------------------------------- commands


def cmd_train(cfg: dict, out: Path) -> dict:
    if cfg["synthetic"]:
        split = generate_synthetic(cfg["num_classes"], cfg["n_per_class"], cfg["data_seed"])
    elif cfg["idx_images"] and cfg["idx_labels"]:
        whitelist = [int(c) for c in cfg["classes"].split(",") if c.strip()] or None
        split = load_idx(cfg["idx_images"], cfg["idx_labels"], whitelist, cfg["cap"], cfg["data_seed"])
    else:
        raise UsageError("give --synthetic or both --idx-images and --idx-labels")
    policy = AugmentPolicy(cfg["augment"], cfg["translate_max"], cfg["rotate_max"], cfg["scale_min"],
                           cfg["scale_max"], cfg["eps"], cfg["alpha"], cfg["steps"])
    tc = TrainConfig(cfg["epochs"], cfg["max_lr"], batch_size=cfg["batch_size"], seed=cfg["seed"],
                     augment=policy)
    ckpt = train(split, tc)
    ckpt.save(out / "model.smck")
    report.write_csv(out / "history.csv", ["epoch", "train_loss", "val_loss", "val_accuracy"],
                     [[h["epoch"], h["train_loss"], h["val_loss"], h["val_accuracy"]] for h in ckpt.history])
    report.line_chart(out / "history.png", [h["epoch"] for h in ckpt.history],
                      {"train": [h["train_loss"] for h in ckpt.history],
                       "val": [h["val_loss"] for h in ckpt.history]},
                      "loss per epoch", "epoch", "cross entropy")
    _, acc = evaluate(ckpt, split.val_x, split.val_y)
    return {"checkpoint": "model.smck", "checkpoint_sha256": ckpt.digest(), "val_accuracy": acc,
            "best_epoch": int(ckpt.metadata["best_epoch"]), "augment": policy.kind}


def cmd_attack(cfg: dict, out: Path) -> dict:
    ckpt = _load_checkpoint(cfg["checkpoint"])
    split = _split_for(ckpt)
    x, y, ids = split.val_x, split.val_y, split.val_ids
    if cfg["limit"]:
        x, y, ids = x[:cfg["limit"]], y[:cfg["limit"]], ids[:cfg["limit"]]
    x_adv = pgd_attack(ckpt, x, y, cfg["eps"], cfg["alpha"], cfg["steps"])
    _save_images(out / "adversarial", x_adv, y, ids)
    _save_images(out / "clean", x, y, ids)
    summary = {"clean_accuracy": evaluate(ckpt, x, y)[1], "attacked_accuracy": evaluate(ckpt, x_adv, y)[1],
               "max_perturbation": float(np.max(np.abs(x_adv - x))), "count": len(x),
               "checkpoint_sha256": ckpt.digest()}
    if cfg["eval_checkpoint"]:
        other = Checkpoint.load(cfg["eval_checkpoint"])
        summary["eval_clean_accuracy"] = evaluate(other, x, y)[1]
        summary["eval_attacked_accuracy"] = evaluate(other, x_adv, y)[1]
    return summary


def cmd_learn_mask(cfg: dict, out: Path) -> dict:
    ckpt = _load_checkpoint(cfg["checkpoint"])
    if cfg["scope"] not in ("global", "per-image"):
        raise UsageError("--scope must be global or per-image")
    if cfg["images"]:
        x, y, ids = _load_images(cfg["images"])
    else:
        split = _split_for(ckpt)
        x, y, ids = split.val_x, split.val_y, split.val_ids
    if cfg["limit"]:
        x, y, ids = x[:cfg["limit"]], y[:cfg["limit"]], ids[:cfg["limit"]]
    mc = MaskLearnConfig(cfg["lambda"], cfg["p"], cfg["lr"], cfg["max_iter"], cfg["batch_size"],
                         cfg["seed"], cfg["tol"], cfg["patience"])
    mask_dir = out / "masks"
    base_acc = evaluate(ckpt, x, y)[1]
    if cfg["scope"] == "global":
        mask = learn_mask_global(ckpt, x, y, mc)
        mask.save(mask_dir / "global.smsk")
        report.write_csv(out / "trace.csv", ["iteration", "objective", "best_objective"], mask.trace.tolist())
        report.render_png(fftshift(mask.values),
                          "grayscale", out / "global.png")
        return {"scope": "global", "masks": 1, "skipped": [], "accuracy": base_acc,
                "masked_accuracy": filtered_accuracy(ckpt, x, y, mask.values),
                "complement_accuracy": filtered_accuracy(ckpt, x, y, complementary_mask(mask)),
                "l1": float(np.abs(mask.values).sum()),
                "zero_fraction": suppressed_fraction(mask), "objective": float(mask.metadata["objective"])}
    masks, skipped = learn_masks_per_image(ckpt, x, y, ids, mc)
    for image_id, m in masks.items():
        m.metadata["tag"] = cfg["tag"]
        m.save(mask_dir / f"{image_id}.smsk")
    report.atomic_write_bytes(out / "skipped.txt", "".join(f"{i}\n" for i in skipped).encode())
    if skipped:
        log.info("skipped %d misclassified images: %s", len(skipped), skipped)
    summary = {"scope": "per-image", "masks": len(masks), "skipped": skipped, "accuracy": base_acc}
    if masks:
        pos = {int(i): j for j, i in enumerate(ids)}
        keep = [pos[i] for i in masks]
        stack = np.stack([m.values for m in masks.values()])
        summary.update(
            masked_accuracy=filtered_accuracy(ckpt, x[keep], y[keep], stack),
            complement_accuracy=filtered_accuracy(ckpt, x[keep], y[keep], complementary_mask(stack)),
            zero_fraction=suppressed_fraction(stack),
            mean_l1=float(np.abs(stack).sum(axis=(1, 2)).mean()),
        )
        report.write_csv(out / "objectives.csv", ["image_id", "label", "objective", "l1"],
                         [[i, m.metadata["label"], float(m.metadata["objective"]), float(np.abs(m.values).sum())]
                          for i, m in masks.items()])
    return summary


def _load_mask_source(path) -> tuple[str, object]:
    p = Path(path)
    if p.is_dir():
        if (p / "global.smsk").exists() and not any(q.name != "global.smsk" for q in p.glob("*.smsk")):
            return "global", Mask.load(p / "global.smsk")
        return "set", analysis.MaskSet.load_dir(p)
    return "global", Mask.load(p)


def cmd_analyze(cfg: dict, out: Path) -> dict:
    if not cfg["masks_a"] or not cfg["masks_b"]:
        raise UsageError("--masks-a and --masks-b are required")
    kind_a, a = _load_mask_source(cfg["masks_a"])
    kind_b, b = _load_mask_source(cfg["masks_b"])
    if kind_a != kind_b:
        raise UsageError("cannot compare a global mask with a per-image set")
    for flag, src in (("--masks-a", a), ("--masks-b", b)):
        if kind_a == "set" and len(src) == 0:
            raise UsageError(f"{flag}: no per-image masks found in {cfg[flag[2:].replace('-', '_')]}")
    if a.d != b.d:
        raise UsageError(f"mask sides differ: {a.d} vs {b.d}")
    bands = make_bands(cfg["bands"], a.d, cfg["k"])
    ranges = bands.ranges()
    summary = {"bands": cfg["bands"], "K": cfg["k"], "d": a.d}
    if kind_a == "global":
        ea, eb = band_energy(a.values, bands), band_energy(b.values, bands)
        diff = analysis.mask_diff_centered(a, b)
        rows = [[name, k, lo, hi, es[k], es[k] - eb[k]]
                for name, es in (("a", ea), ("b", eb)) for k, (lo, hi) in enumerate(ranges)]
        report.write_csv(out / "energy.csv", ["mask", "band", "low", "high", "energy", "difference"], rows)
        shared = max(np.abs(a.values).max(), np.abs(b.values).max())
        report.render_png(fftshift(a.values), "grayscale", out / "mask_a.png", 0.0, shared)
        report.render_png(fftshift(b.values), "grayscale", out / "mask_b.png", 0.0, shared)
        report.render_png(diff, "diverging", out / "difference.png")
        report.bar_chart(out / "energy_difference.png", ea - eb, [f"{lo:.2f}-{hi:.2f}" for lo, hi in ranges],
                         "band energy difference (a - b)", "l2", reference=0.0)
        summary.update(energy_a=ea, energy_b=eb, energy_difference=ea - eb,
                       max_abs_difference=float(np.abs(diff).max()))
        return summary
    ids, ea, eb = analysis.paired_energies(a, b, bands)
    frac = np.mean(ea > eb, axis=0)
    by_a, by_b = a.by_id(), b.by_id()
    rows = []
    for name, es, lookup in (("a", ea, by_a), ("b", eb, by_b)):
        for i, e_row in zip(ids, es):
            for k, ((lo, hi), e) in enumerate(zip(ranges, e_row)):
                rows.append([name, i, lookup[i].label, k, lo, hi, e])
    report.write_csv(out / "energy.csv", ["set", "image_id", "label", "band", "low", "high", "energy"], rows)
    report.write_csv(out / "exceed_fraction.csv", ["band", "low", "high", "fraction"],
                     [[k, lo, hi, f] for k, ((lo, hi), f) in enumerate(zip(ranges, frac))])
    report.bar_chart(out / "exceed_fraction.png", frac, [f"{lo:.2f}-{hi:.2f}" for lo, hi in ranges],
                     "fraction of pairs with energy(a) > energy(b)", "fraction", reference=0.5)
    va, vb = a.values().mean(axis=0), b.values().mean(axis=0)
    shared = max(np.abs(va).max(), np.abs(vb).max())
    report.render_png(fftshift(va), "grayscale", out / "mean_mask_a.png", 0.0, shared)
    report.render_png(fftshift(vb), "grayscale", out / "mean_mask_b.png", 0.0, shared)
    report.render_png(analysis.mask_diff_centered(va, vb), "diverging", out / "mean_difference.png")
    summary.update(pairs=len(ids), exceed_fraction=frac,
                   mean_energy_a=ea.mean(axis=0), mean_energy_b=eb.mean(axis=0))
    if len(np.unique(a.labels)) >= 2 and len(a) >= 5:
        summary["probe_a"] = _probe_outputs(a, cfg["seed"], out, "a")
    if cfg["expect_low_band"] and not (frac[0] > 0.5 and frac[-1] < 0.5):
        summary["failed_check"] = "low_band_exceed_fraction"
    return summary


def _probe_outputs(masks: analysis.MaskSet, seed: int, out: Path, prefix: str) -> dict:
    true = analysis.linear_probe(masks, False, seed)
    shuffled = analysis.linear_probe(masks, True, seed)
    points = analysis.pca_scatter(masks, seed)
    report.write_csv(out / f"{prefix}_scatter.csv", ["pc1", "pc2", "label"], points)
    report.scatter_chart(out / f"{prefix}_scatter.png", points, "probe scores, top-2 components")
    report.write_csv(out / f"{prefix}_probe.csv", ["labels", "accuracy", "train_accuracy"],
                     [["true", true.accuracy, true.train_accuracy],
                      ["shuffled", shuffled.accuracy, shuffled.train_accuracy]])
    return {"true": true.as_dict(), "shuffled": shuffled.as_dict(),
            "margin": true.accuracy - shuffled.accuracy}


def cmd_probe(cfg: dict, out: Path) -> dict:
    if not cfg["masks"]:
        raise UsageError("--masks is required")
    masks = analysis.MaskSet.load_dir(cfg["masks"])
    if len(masks) < 3:
        raise UsageError(f"need at least three per-image masks, found {len(masks)}")
    return _probe_outputs(masks, cfg["seed"], out, "probe")


def cmd_demo(cfg: dict, out: Path) -> dict:
    which = cfg["which"]
    checks = {}
    if which == "blue-shift":
        names = list(theory.NONLINEARITIES) if cfg["nl"] == "all" else ["identity", cfg["nl"]]
        if cfg["nl"] != "all" and cfg["nl"] not in theory.NONLINEARITIES:
            raise UsageError(f"unknown nonlinearity {cfg['nl']!r}")
        panels = {nl: theory.nonlinearity_spectrum(cfg["freq"], nl, cfg["n"]) for nl in names}
        report.write_csv(out / "spectra.csv", ["bin", *names],
                         [[b, *(panels[nl][b] for nl in names)] for b in range(cfg["n"] // 2 + 1)])
        report.spectrum_panels(out / "blue_shift.png", panels, f"sin at bin {cfg['freq']}")
        energies = {}
        for nl in names:
            total, outside = theory.harmonic_energy(cfg["freq"], nl, cfg["n"])
            energies[nl] = {"total": total, "outside_fundamental": outside}
            nonlinear = nl != "identity"
            checks[f"{nl}_distortion"] = (outside > 1e-9 * total) if nonlinear else (outside <= 1e-18 * total)
        return {"demo": which, "energies": energies, "checks": checks}
    if which == "intermodulation":
        try:
            rep = theory.intermodulation_check(cfg["w1"], cfg["w2"], cfg["n"])
        except theory.AliasingError as exc:
            raise UsageError(str(exc)) from None
        report.write_csv(out / "peaks.csv", ["bin", "magnitude", "expected"], rep.rows())
        report.spectrum_panels(out / "intermodulation.png",
                               {f"(cos {cfg['w1']} + cos {cfg['w2']})^2": rep.spectrum})
        checks["peaks"] = rep.max_peak_error < 1e-9 * cfg["n"]
        checks["off_support"] = rep.max_off_support < 1e-9
        return {"demo": which, "peaks": rep.rows(), "max_off_support": rep.max_off_support, "checks": checks}
    if which == "sinc":
        a = cfg["a"]
        gammas = np.round(np.linspace(0, 3, 31), 10)
        analytic = theory.sinc_factor(gammas, a)
        numeric = np.array([theory.sinc_quadrature(g, a).real for g in gammas])
        report.write_csv(out / "sinc.csv", ["gamma", "analytic", "quadrature"], zip(gammas, analytic, numeric))
        report.line_chart(out / "sinc.png", gammas, {"2a sinc(2 pi gamma a)": analytic, "quadrature": numeric},
                          f"box average damping, a={a}", "gamma", "factor")
        checks["dc_factor"] = bool(analytic[0] == 2 * a)
        checks["quadrature"] = bool(np.max(np.abs(analytic - numeric)) < 1e-8)
        checks["peak_at_dc"] = bool(np.all(np.abs(analytic[1:]) < analytic[0]))
        return {"demo": which, "a": a, "factor_at_zero": float(analytic[0]),
                "max_quadrature_error": float(np.max(np.abs(analytic - numeric))), "checks": checks}
    if which == "selfconv":
        x = np.random.default_rng(cfg["seed"]).normal(size=cfg["n"])
        err = theory.self_convolution_check(x, cfg["k"])
        report.write_csv(out / "selfconv.csv", ["n", "k", "max_error"], [[cfg["n"], cfg["k"], err]])
        checks["identity"] = err < 1e-8
        return {"demo": which, "max_error": err, "checks": checks}
    raise UsageError("demo needs one of blue-shift, intermodulation, sinc, selfconv")


COMMANDS = {"train": cmd_train, "attack": cmd_attack, "learn-mask": cmd_learn_mask,
            "analyze": cmd_analyze, "demo": cmd_demo, "probe": cmd_probe}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args.command, args)
        out = _out_dir(args.command, args)
        out.mkdir(parents=True, exist_ok=True)
        summary = COMMANDS[args.command](cfg, out)
        inputs = [cfg[k] for k in ("checkpoint", "eval_checkpoint", "idx_images", "idx_labels")
                  if cfg.get(k) and Path(cfg[k]).is_file()]
        _finish(out, args.command, cfg, summary, inputs)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    failed = [name for name, ok in summary.get("checks", {}).items() if not ok]
    if summary.get("failed_check"):
        failed.append(summary["failed_check"])
    if failed:
        print(f"check failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
