"""Command-line entry point: ``nnlft <command> [options]``.

Settings come from built-in defaults, then an optional ``--config`` file of
``key = value`` lines, then command-line flags.  Every command that writes
output also writes the resolved settings to ``runspec.txt`` in its output
directory.

Exit codes: 0 success, 1 usage/configuration error, 2 data error,
3 training divergence, 4 gradient check failed.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import __version__, _backend
from .errors import ConfigError, DataError, DivergenceError
from .gradcheck import VARIANTS
from .gradcheck import run_grad_check as grad_check
from .ingest import DEFAULT_K_SLOTS, build_tensor, read_edge_file, save_manifest
from .metrics import compare_runs, evaluate, save_report, synth_tensor
from .model import load_factors, save_factors
from .solver import TrainConfig, save_trace, train
from .tensor_store import DUPLICATE_POLICIES, density, load_tensor, save_tensor, split

log = logging.getLogger("nnlft")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED, EXIT_CHECK_FAILED = 0, 1, 2, 3, 4

_DEFAULT_CONFIG = TrainConfig()


def _floats(text, n=None):
    try:
        values = tuple(float(x) for x in str(text).split(","))
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None
    if n is not None and len(values) != n:
        raise ConfigError(f"expected {n} comma-separated numbers, got {text!r}")
    return values


def _ints(text, n):
    values = _floats(text, n)
    if any(v != int(v) for v in values):
        raise ConfigError(f"expected integers, got {text!r}")
    return tuple(int(v) for v in values)


def _int(text):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"expected an integer, got {text!r}") from None


def _float(text):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"expected a number, got {text!r}") from None


def _flag(text):
    if isinstance(text, bool):
        return text
    if str(text).lower() in ("1", "true", "yes", "on"):
        return True
    if str(text).lower() in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


# name -> (converter, default, help)
OPTIONS = {
    "data": (str, None, "input file (edge list for ingest, tensor file otherwise)"),
    "out": (str, None, "output directory"),
    "model": (str, None, "factor file written by train"),
    "rank": (_int, _DEFAULT_CONFIG.rank, "number of latent components R"),
    "eta": (_float, _DEFAULT_CONFIG.eta, "step size"),
    "lambda": (_float, _DEFAULT_CONFIG.lam, "regularization strength"),
    "gamma": (_float, _DEFAULT_CONFIG.gamma, "momentum coefficient in [0, 1)"),
    "epochs": (_int, _DEFAULT_CONFIG.max_epochs, "maximum number of epochs"),
    "patience": (_int, _DEFAULT_CONFIG.patience, "epochs without validation improvement before stopping"),
    "min-delta": (_float, _DEFAULT_CONFIG.min_delta, "validation RMSE improvement that resets patience"),
    "init-scale": (_float, _DEFAULT_CONFIG.init_scale, "half-width of the uniform initialization"),
    "reg-mode": (str, _DEFAULT_CONFIG.reg_mode, "eq6-exact or raw-y"),
    "method": (str, "msgd", "msgd (momentum) or sgd (plain)"),
    "seed": (_int, 0, "random seed"),
    "seeds": (_int, 10, "number of paired seeds for compare"),
    "split": (lambda s: _floats(s, 3), (0.7, 0.1, 0.2), "train,validation,test ratios"),
    "k-slots": (_int, DEFAULT_K_SLOTS, "number of time slots"),
    "duplicate-policy": (str, "mean", "mean or last-wins"),
    "delimiter": (str, "auto", "field delimiter: ',', 'tab' or auto"),
    "w-range": (lambda s: _floats(s, 2), None, "fixed weight normalization range min,max"),
    "shared-ids": (_flag, False, "index sources and targets from one node set"),
    "dims": (lambda s: _ints(s, 3), (200, 200, 20), "synthetic tensor dims I,J,K"),
    "true-rank": (_int, 4, "rank of the synthetic ground truth"),
    "entries": (_int, 50000, "number of synthetic observed entries"),
    "noise-sd": (_float, 0.0, "Gaussian noise on synthetic values"),
    "cases": (_int, 1000, "number of random gradient-check cases"),
    "lambda-zero": (_flag, False, "gradient check with lambda = 0 only"),
    "variant": (str, "exact", "gradient variant to check: " + ", ".join(VARIANTS)),
    "backend": (str, None, "kernel backend: " + ", ".join(_backend.available())),
}

TRAIN_KEYS = ["rank", "eta", "lambda", "gamma", "epochs", "patience", "min-delta",
              "init-scale", "reg-mode", "seed", "split", "backend"]

COMMANDS = {
    "ingest": ["data", "out", "k-slots", "duplicate-policy", "delimiter", "w-range", "shared-ids"],
    "synth": ["out", "dims", "true-rank", "entries", "noise-sd", "seed"],
    "train": ["data", "out", "method"] + TRAIN_KEYS,
    "eval": ["data", "out", "model", "split", "seed", "backend"],
    "compare": ["data", "out", "seeds"] + TRAIN_KEYS,
    "grad-check": ["out", "cases", "seed", "lambda-zero", "variant"],
}
REQUIRED = {
    "ingest": ["data", "out"], "synth": ["out"], "train": ["data", "out"],
    "eval": ["data", "model"], "compare": ["data", "out"], "grad-check": [],
}
INPUT_KEYS = ("data", "model")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="nnlft", description="Non-negative latent factorization of sparse "
                     "dynamic-network tensors with momentum SGD.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, keys in COMMANDS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", help="file of 'key = value' lines")
        p.add_argument("-v", "--verbose", action="store_true")
        for key in keys:
            p.add_argument(f"--{key}", dest=key.replace("-", "_"), default=argparse.SUPPRESS,
                           help=OPTIONS[key][2])
    return parser


def read_config_file(path) -> dict:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            values[key.strip().replace("_", "-")] = value.strip()
    return values


def resolve(command, args) -> dict:
    """Merge defaults, config file and flags into typed settings."""
    keys = COMMANDS[command]
    raw = {}
    if getattr(args, "config", None):
        for key, value in read_config_file(args.config).items():
            if key == "command":
                continue
            if key not in OPTIONS:
                raise ConfigError(f"unknown config key {key!r}")
            if key in keys:
                raw[key] = value
    for key in keys:
        attr = key.replace("-", "_")
        if hasattr(args, attr):
            raw[key] = getattr(args, attr)
    spec = {}
    for key in keys:
        convert, default, _ = OPTIONS[key]
        spec[key] = convert(raw[key]) if key in raw and raw[key] is not None else default
    for key in REQUIRED[command]:
        if spec.get(key) is None:
            raise ConfigError(f"{command}: --{key} is required")
    for key in INPUT_KEYS:
        if spec.get(key) is not None and not os.path.exists(spec[key]):
            raise DataError(f"input path not found: {spec[key]}")
    return spec


def train_config(spec) -> TrainConfig:
    return TrainConfig(
        rank=spec["rank"], eta=spec["eta"], lam=spec["lambda"], gamma=spec["gamma"],
        max_epochs=spec["epochs"], patience=spec["patience"], seed=spec["seed"],
        reg_mode=spec["reg-mode"], init_scale=spec["init-scale"], min_delta=spec["min-delta"],
    )


def _format(value):
    if value is None:
        return ""
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value).lower() if isinstance(value, bool) else str(value)


def write_runspec(command, spec, out):
    with open(os.path.join(out, "runspec.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"command = {command}\n")
        for key in sorted(spec):
            if key == "backend":
                continue  # outputs do not depend on it
            fh.write(f"{key} = {_format(spec[key])}\n")


def _prepare_out(command, spec):
    out = spec.get("out")
    if out is None:
        return None
    os.makedirs(out, exist_ok=True)
    write_runspec(command, spec, out)
    return out


# -- commands --------------------------------------------------------------

def run_ingest(spec):
    out = _prepare_out("ingest", spec)
    delimiter = {"auto": None, "tab": "\t", "\\t": "\t"}.get(spec["delimiter"], spec["delimiter"])
    if spec["duplicate-policy"] not in DUPLICATE_POLICIES:
        raise ConfigError(f"unknown duplicate policy {spec['duplicate-policy']!r}")
    records = read_edge_file(spec["data"], delimiter)
    tensor, manifest = build_tensor(records, spec["k-slots"], spec["duplicate-policy"],
                                    w_range=spec["w-range"], shared_ids=spec["shared-ids"])
    save_tensor(tensor, os.path.join(out, "tensor.tsv"))
    save_manifest(manifest, out)
    print(f"shape={tuple(tensor.shape)} records={len(records)} entries={len(tensor)} "
          f"density={density(tensor):.3e}")
    return EXIT_OK


def run_synth(spec):
    out = _prepare_out("synth", spec)
    tensor, truth = synth_tensor(spec["dims"], spec["true-rank"], spec["entries"],
                                 spec["noise-sd"], spec["seed"])
    save_tensor(tensor, os.path.join(out, "tensor.tsv"))
    save_factors(truth, os.path.join(out, "truth.tsv"))
    print(f"shape={tuple(tensor.shape)} entries={len(tensor)} density={density(tensor):.6g}")
    return EXIT_OK


def run_train(spec):
    config = train_config(spec)
    if spec["method"] not in ("msgd", "sgd"):
        raise ConfigError(f"unknown method {spec['method']!r}")
    tensor = load_tensor(spec["data"])
    parts = split(tensor, spec["split"], config.seed)
    out = _prepare_out("train", spec)
    best, trace = train(tensor, parts, config, method=spec["method"], backend=spec["backend"])
    save_factors(best, os.path.join(out, "model.tsv"))
    save_trace(trace, os.path.join(out, "trace.csv"))
    print(f"best_epoch={trace.best_epoch} best_val_rmse={trace.best_validation_rmse!r} "
          f"epochs={trace.epochs} stopped={trace.stopped_reason}")
    return EXIT_OK


def run_eval(spec):
    tensor = load_tensor(spec["data"])
    state = load_factors(spec["model"])
    if tuple(state.shape) != tuple(tensor.shape):
        raise DataError(f"model shape {tuple(state.shape)} does not match tensor {tuple(tensor.shape)}")
    # the split is rebuilt from the seed the model was trained with unless overridden
    seed = spec["seed"] if spec["seed"] is not None else state.seed
    spec = dict(spec, seed=seed)
    parts = split(tensor, spec["split"], seed)
    out = _prepare_out("eval", spec)
    lines = ["split,rmse,mae,entries"]
    for name, positions in (("train", parts.train), ("validation", parts.validation),
                            ("test", parts.test)):
        if len(positions) == 0:
            continue
        rep = evaluate(state, tensor.subset(positions), name)
        lines.append(f"{name},{rep.rmse!r},{rep.mae!r},{rep.entry_count}")
    text = "\n".join(lines) + "\n"
    if out is not None:
        with open(os.path.join(out, "eval.csv"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return EXIT_OK


def run_compare(spec):
    base = train_config(spec)
    if spec["seeds"] < 1:
        raise ConfigError("--seeds must be >= 1")
    tensor = load_tensor(spec["data"])
    out = _prepare_out("compare", spec)
    labelled = []
    paired = ["seed,momentum_best_rmse,momentum_epochs_to_best,plain_best_rmse,plain_epochs_to_best"]
    wins = 0
    for s in range(spec["seeds"]):
        seed = base.seed + s
        parts = split(tensor, spec["split"], seed)
        rows = {}
        for label, config in (("momentum", base.replace(seed=seed)),
                              ("plain", base.replace(seed=seed, gamma=0.0))):
            _, trace = train(tensor, parts, config, backend=spec["backend"])
            save_trace(trace, os.path.join(out, f"trace_{label}_seed{seed}.csv"))
            labelled.append((f"{label}/seed{seed}", trace))
            rows[label] = compare_runs([(label, trace)])[0]
        m, p = rows["momentum"], rows["plain"]
        wins += m.epochs_to_best < p.epochs_to_best
        paired.append(f"{seed},{m.best_rmse!r},{m.epochs_to_best},{p.best_rmse!r},{p.epochs_to_best}")
        print(f"seed {seed}: momentum {m.best_rmse:.6f}/{m.epochs_to_best}  "
              f"plain {p.best_rmse:.6f}/{p.epochs_to_best}")
    save_report(compare_runs(labelled), os.path.join(out, "comparison.csv"))
    with open(os.path.join(out, "paired.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(paired) + "\n")
    print(f"momentum reached its best epoch sooner in {wins} of {spec['seeds']} seeds")
    return EXIT_OK


def run_grad_check(spec):
    if spec["variant"] not in VARIANTS:
        raise ConfigError(f"unknown variant {spec['variant']!r}")
    report = grad_check(n_cases=spec["cases"], seed=spec["seed"],
                            lam_zero=spec["lambda-zero"], gradient=VARIANTS[spec["variant"]])
    out = _prepare_out("grad-check", spec)
    text = report.summary()
    if out is not None:
        with open(os.path.join(out, "gradcheck.txt"), "w", encoding="utf-8", newline="\n") as fh:
            # timing is left out so the file stays reproducible
            fh.write(f"passed = {str(report.passed).lower()}\nmax_error = {report.max_error!r}\n"
                     f"cases = {report.n_cases}\ncomponents = {report.n_components}\n")
            for key, value in report.worst_case.items():
                fh.write(f"worst.{key} = {value}\n")
    print(text)
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


RUNNERS = {
    "ingest": run_ingest, "synth": run_synth, "train": run_train, "eval": run_eval,
    "compare": run_compare, "grad-check": run_grad_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = resolve(args.command, args)
        if args.command == "eval" and "seed" not in _explicit(args):
            spec["seed"] = None
        return RUNNERS[args.command](spec)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def _explicit(args):
    keys = set(vars(args))
    if getattr(args, "config", None):
        keys |= set(read_config_file(args.config))
    return keys


if __name__ == "__main__":
    sys.exit(main())
