"""Command-line front end.

Usage::

    zslfeedback <command> [--config run.ini] [--seed N] [--out DIR] [--name RUN] ...

Commands: synth, train, generate, eval, gzsl, gradcheck, report.
Settings come from built-in defaults, then the INI file given with
``--config``, then command-line flags. The merged settings are written to
``<out>/<name>/effective-config.ini`` by every command that writes a run
directory. Exit status is 0 on success, 1 on a runtime or validation
failure and 2 on a usage error.
"""

import argparse
import configparser
import io
import logging
import os
import sys

import numpy as np

from . import dataset, evalsuite, gradsuite, pipeline, zslmodel
from .errors import ConfigError, ZslError
from .losses import ObjectiveWeights, TripletConfig
from .npyio import write_npy

log = logging.getLogger("zslfeedback")

# (section, key, type, default, help); keys are unique across sections
FIELDS = [
    ("run", "seed", int, 0, "seed for data synthesis, initialization, sampling and classifiers"),
    ("run", "out", str, "out", "root output directory"),
    ("run", "name", str, "run", "run directory name under --out"),
    ("run", "data", str, "", "dataset directory (default: <out>/<name>/data)"),
    ("run", "mode", str, "zsl", "evaluation mode: zsl or gzsl"),
    ("run", "data_format", str, "npy", "format written by synth: npy or csv"),
    ("synth", "D", int, 16, "attribute dimension"),
    ("synth", "d_x", int, 64, "feature dimension"),
    ("synth", "n_seen", int, 20, "number of seen classes"),
    ("synth", "n_unseen", int, 5, "number of unseen classes"),
    ("synth", "per_class", int, 100, "samples per class"),
    ("synth", "sigma_x", float, 0.3, "feature noise standard deviation"),
    ("synth", "test_seen_frac", float, 0.2, "fraction of each seen class held out"),
    ("train", "epochs", int, 50, "training epochs"),
    ("train", "P", int, 8, "classes per batch"),
    ("train", "K", int, 4, "samples per class per batch"),
    ("train", "lr", float, 1e-4, "Adam learning rate"),
    ("train", "beta1", float, 0.9, "Adam first-moment decay"),
    ("train", "beta2", float, 0.999, "Adam second-moment decay"),
    ("train", "adam_eps", float, 1e-8, "Adam epsilon"),
    ("train", "margin", float, 1.0, "triplet margin m"),
    ("train", "alpha", float, 1.0, "reconstruction weight"),
    ("train", "beta", float, 1.0, "regressor feedback weight"),
    ("train", "lambda", float, 1.0, "discriminative regression weight"),
    ("train", "feedback_iters", int, 1, "decode/regress passes"),
    ("train", "use_triplet", bool, True, "include the triplet term"),
    ("train", "regressor_head", str, "shared", "regressor head: shared or split"),
    ("classifier", "classifier", str, "svm", "final classifier: svm or knn"),
    ("classifier", "svm_reg", float, 1e-4, "SVM regularization"),
    ("classifier", "svm_epochs", int, 50, "SVM epochs"),
    ("classifier", "svm_batch", int, 8, "SVM mini-batch size"),
    ("classifier", "knn_k", int, 5, "neighbours for knn"),
    ("classifier", "gen_samples", int, 200, "generated samples per unseen class"),
    ("classifier", "gen_noise", float, 0.05, "generation noise std"),
]
_SPEC = {key: (section, typ, default) for section, key, typ, default, _ in FIELDS}
CHOICES = {"mode": ("zsl", "gzsl"), "data_format": ("npy", "csv"),
           "regressor_head": ("shared", "split"), "classifier": ("svm", "knn")}


def _parse_value(key, text):
    _, typ, _ = _SPEC[key]
    text = text.strip()
    try:
        if typ is bool:
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        value = typ(text)
    except ValueError:
        raise ConfigError(f"field {key!r}: cannot parse {text!r} as {typ.__name__}",
                          field=key) from None
    if key in CHOICES and value not in CHOICES[key]:
        raise ConfigError(f"field {key!r} must be one of {CHOICES[key]}, got {value!r}",
                          field=key)
    return value


def load_config(path=None, overrides=None):
    """Defaults, then the INI file at ``path``, then ``overrides``.

    Unknown sections and keys are rejected.
    """
    cfg = {key: default for _, key, _, default, _ in FIELDS}
    if path:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str  # keep key case (D, P, K)
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}", field="config") from exc
        for section in parser.sections():
            for key, text in parser.items(section):
                if key not in _SPEC:
                    raise ConfigError(f"unknown config key {section}.{key}", field=key)
                if _SPEC[key][0] != section:
                    raise ConfigError(
                        f"config key {key!r} belongs in section [{_SPEC[key][0]}], "
                        f"not [{section}]", field=key)
                cfg[key] = _parse_value(key, text)
    for key, value in (overrides or {}).items():
        if key not in _SPEC:
            raise ConfigError(f"unknown config key {key}", field=key)
        cfg[key] = _parse_value(key, str(value)) if isinstance(value, str) else value
    return cfg


def config_to_ini(cfg):
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for section, key, _, _, _ in FIELDS:
        if not parser.has_section(section):
            parser.add_section(section)
        v = cfg[key]
        parser.set(section, key, repr(v) if isinstance(v, float) else str(v))
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


# -- config -> library objects ------------------------------------------------

def synth_config(cfg):
    return dataset.SynthConfig(D=cfg["D"], d_x=cfg["d_x"], n_seen=cfg["n_seen"],
                               n_unseen=cfg["n_unseen"], per_class=cfg["per_class"],
                               sigma_x=cfg["sigma_x"], seed=cfg["seed"],
                               test_seen_frac=cfg["test_seen_frac"])


def train_config(cfg):
    try:
        weights = ObjectiveWeights(alpha=cfg["alpha"], beta=cfg["beta"], lam=cfg["lambda"])
    except ValueError as exc:
        raise ConfigError(str(exc), field="alpha/beta/lambda") from exc
    try:
        triplet = TripletConfig(margin=cfg["margin"])
    except ValueError as exc:
        raise ConfigError(str(exc), field="margin") from exc
    try:
        feedback = zslmodel.FeedbackConfig(cfg["feedback_iters"])
    except ValueError as exc:
        raise ConfigError(str(exc), field="feedback_iters") from exc
    return pipeline.TrainConfig(epochs=cfg["epochs"], P=cfg["P"], K=cfg["K"], lr=cfg["lr"],
                                beta1=cfg["beta1"], beta2=cfg["beta2"],
                                adam_eps=cfg["adam_eps"], weights=weights, triplet=triplet,
                                feedback=feedback, use_triplet=cfg["use_triplet"],
                                seed=cfg["seed"])


def classifier_config(cfg):
    return pipeline.ClassifierConfig(kind=cfg["classifier"], reg=cfg["svm_reg"],
                                     epochs=cfg["svm_epochs"], batch_size=cfg["svm_batch"],
                                     knn_k=cfg["knn_k"], gen_samples=cfg["gen_samples"],
                                     gen_noise=cfg["gen_noise"], seed=cfg["seed"])


def run_dir(cfg):
    return os.path.join(cfg["out"], cfg["name"])


def data_dir(cfg):
    return cfg["data"] or os.path.join(run_dir(cfg), "data")


def _prepare_run(cfg):
    path = run_dir(cfg)
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, "effective-config.ini"), "w") as fh:
        fh.write(config_to_ini(cfg))
    return path


def _load_model(cfg):
    path = os.path.join(run_dir(cfg), "model.zslf")
    if not os.path.exists(path):
        raise ConfigError(f"no trained model at {path}; run 'train' first", field="name")
    return zslmodel.load_model(path)


# -- commands ----------------------------------------------------------------

def cmd_synth(cfg):
    ds = dataset.synth_generate(synth_config(cfg))
    _prepare_run(cfg)
    target = data_dir(cfg)
    dataset.save(ds, target, fmt=cfg["data_format"])
    print(f"wrote {ds.n} samples, {ds.n_classes} classes to {target}")
    return 0


def cmd_train(cfg):
    tcfg = train_config(cfg)
    ds = dataset.load(data_dir(cfg))
    path = _prepare_run(cfg)
    model = zslmodel.build_model(ds.d_x, ds.D, seed=cfg["seed"],
                                 regressor_head=cfg["regressor_head"])
    model, history = pipeline.train(model, ds, tcfg)
    zslmodel.save_model(model, os.path.join(path, "model.zslf"))
    with open(os.path.join(path, "trainlog.json"), "w") as fh:
        fh.write(evalsuite.dumps(history.to_json()) + "\n")
    last = history.records[-1]
    print(f"trained {tcfg.epochs} epochs; final total loss {last['total']:.6g}")
    return 0


def cmd_generate(cfg):
    ccfg = classifier_config(cfg)
    model = _load_model(cfg)
    ds = dataset.load(data_dir(cfg))
    path = _prepare_run(cfg)
    feats, labels = pipeline.generate_for(model, ds, ccfg,
                                          zslmodel.FeedbackConfig(cfg["feedback_iters"]))
    target = os.path.join(path, "generated")
    os.makedirs(target, exist_ok=True)
    write_npy(os.path.join(target, "features.npy"), feats)
    with open(os.path.join(target, "labels.txt"), "w") as fh:
        fh.writelines(f"{int(v)}\n" for v in labels)
    print(f"generated {feats.shape[0]} features for {ds.split.unseen.size} unseen classes")
    return 0


def cmd_eval(cfg):
    ccfg = classifier_config(cfg)
    fb = zslmodel.FeedbackConfig(cfg["feedback_iters"])
    model = _load_model(cfg)
    ds = dataset.load(data_dir(cfg))
    path = _prepare_run(cfg)
    if cfg["mode"] == "zsl":
        pred = pipeline.zsl_predict(model, ds, ccfg, fb)
        test = ds.split.test_unseen
        emb = evalsuite.pca_2d(zslmodel.encode(model, ds.features[test]))
        report = evalsuite.zsl_report(pred.labels, pred.truth, pred.classes,
                                      scores=pred.scores, embeddings=(emb, pred.truth))
        summary = f"zsl top-1 {report.top1:.4f}"
    else:
        seen, unseen = pipeline.gzsl_predict(model, ds, ccfg, fb)
        test = np.concatenate([ds.split.test_seen, ds.split.test_unseen])
        emb = evalsuite.pca_2d(zslmodel.encode(model, ds.features[test]))
        report = evalsuite.gzsl_report(
            seen.labels, seen.truth, unseen.labels, unseen.truth, ds.split.seen,
            ds.split.unseen, scores=np.vstack([seen.scores, unseen.scores]),
            embeddings=(emb, ds.labels[test]))
        g = report.gzsl
        summary = (f"gzsl acc_seen {g['acc_seen']:.4f} acc_unseen {g['acc_unseen']:.4f} "
                   f"H {g['H']:.4f}")
    # a previous run in the other mode may have left curves for other classes
    for name in os.listdir(path):
        if name.startswith("roc_") and name.endswith(".csv"):
            os.remove(os.path.join(path, name))
    evalsuite.emit_report(report, path)
    print(summary)
    return 0


def cmd_gzsl(cfg):
    return cmd_eval({**cfg, "mode": "gzsl"})


def cmd_gradcheck(cfg, corrupt=None):
    results = gradsuite.run_gradchecks(seed=cfg["seed"], corrupt=corrupt)
    lines = [f"{'component':<28} {'params':>7} {'max_rel_err':>12}  status"]
    for r in results:
        lines.append(f"{r.name:<28} {r.n_params:>7} {r.max_rel_error:>12.3e}  "
                     f"{'PASS' if r.passed else 'FAIL'}")
    ok = all(r.passed for r in results)
    lines.append(f"tolerance {gradsuite.TOLERANCE:g}, step {gradsuite.EPS:g}: "
                 f"{'all passed' if ok else 'FAILED'}")
    text = "\n".join(lines) + "\n"
    path = _prepare_run(cfg)
    with open(os.path.join(path, "gradcheck.txt"), "w") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return 0 if ok else 1


def cmd_report(cfg):
    path = run_dir(cfg)
    if not os.path.exists(os.path.join(path, "report.json")):
        raise ConfigError(f"no report.json in {path}; run 'eval' first", field="name")
    rep = evalsuite.load_report(path)
    lines = ["class  support  top1"]
    for c in rep["classes"]:
        lines.append(f"{c:>5}  {rep['support'][str(c)]:>7}  {rep['per_class'][str(c)]:.4f}")
    lines.append(f"mean per-class top-1: {rep['top1']:.4f}")
    if rep.get("gzsl"):
        g = rep["gzsl"]
        H = evalsuite.harmonic_mean(g["acc_seen"], g["acc_unseen"])
        if H != g["H"]:
            raise ZslError(f"stored H {g['H']!r} differs from recomputed {H!r}")
        lines.append(f"acc_seen {g['acc_seen']:.4f}  acc_unseen {g['acc_unseen']:.4f}  "
                     f"H {H:.4f}")
    text = "\n".join(lines) + "\n"
    with open(os.path.join(path, "summary.txt"), "w") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return 0


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "generate": cmd_generate,
            "eval": cmd_eval, "gzsl": cmd_gzsl, "gradcheck": cmd_gradcheck,
            "report": cmd_report}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [run], [synth], [train], [classifier]")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    for section, key, typ, default, helptext in FIELDS:
        flag = "--" + key.replace("_", "-")
        kw = {"dest": key, "default": None, "help": f"{helptext} [{section}; {default}]"}
        if typ is bool:
            kw["type"] = lambda s, _k=key: _parse_value(_k, s)
            kw["metavar"] = "BOOL"
        else:
            kw["type"] = typ
        if key in CHOICES:
            kw["choices"] = CHOICES[key]
        common.add_argument(flag, **kw)
    parser = argparse.ArgumentParser(prog="zslfeedback", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    helps = {"synth": "write a synthetic dataset", "train": "train a model",
             "generate": "generate unseen-class features", "eval": "evaluate (zsl or gzsl)",
             "gzsl": "evaluate in gzsl mode", "gradcheck": "finite-difference gradient checks",
             "report": "summarize an emitted report"}
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common], help=helps[name])
        if name == "gradcheck":
            p.add_argument("--corrupt", choices=list(gradsuite.CHECKS),
                           help=argparse.SUPPRESS)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {key: getattr(args, key) for key in _SPEC if getattr(args, key) is not None}
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "gradcheck":
            return cmd_gradcheck(cfg, corrupt=args.corrupt)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        where = f" (field {exc.field})" if exc.field else ""
        print(f"error{where}: {exc}", file=sys.stderr)
        return 1
    except (ZslError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
