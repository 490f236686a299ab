"""Command-line front end: ``fanoise-lab {inject,spectrum,gradcheck,train,sweep}``.

Exit codes: 0 success, 2 parse/config error, 3 numerical failure,
4 verification failure, 5 training divergence.
"""

from __future__ import annotations

import argparse
import logging
import math
import shutil
import sys
from pathlib import Path

import numpy as np

from . import config as C
from .errors import (
    FanoiseLabError,
    InvalidInputError,
    InvalidParameterError,
    NumericalFailureError,
    TrainingDivergedError,
)
from .gradcheck import run_suite
from .matrix import RngStream, format_real, read_matrix_csv, write_matrix_csv
from .noise import NoiseConfig, Position, Scaling, Side, expected_noise_energy, fanoise_inject
from .plot import overlap_svg, spectrum_svg
from .spectral import run_spectrum_experiment
from .synth import LogLinear, PairedDatasetSpec, PowerLaw, SpectrumSpec, make_paired_dataset, make_spectrum_matrix
from .trainer import TrainConfig, sweep, train, write_sweep, write_train_log

log = logging.getLogger("fanoise_lab")

EXIT_OK, EXIT_PARSE, EXIT_NUMERIC, EXIT_VERIFY, EXIT_DIVERGED = 0, 2, 3, 4, 5
SNAPSHOT = "resolved.cfg"


def _choice(enum):
    def parse(text):
        return enum(text.strip()).value

    return parse


NOISE_KEYS = {
    "alpha": C.Key("alpha", float, 0.1, "noise strength"),
    "scaling": C.Key("scaling", _choice(Scaling), "sublinear", "none|uniform|linear|sublinear"),
    "side": C.Key("side", _choice(Side), "both", "query|key|both"),
    "position": C.Key("position", _choice(Position), "output_layer", "input_layer|output_layer"),
    "seed": C.Key("seed", int, 42, "random seed"),
    "svd_tol": C.Key("svd_tol", float, 1e-12, "relative SVD truncation tolerance"),
}

INJECT_KEYS = {
    "input": C.Key("input", str, "", "input matrix CSV"),
    **NOISE_KEYS,
    "repetitions": C.Key("repetitions", int, 0, "extra injections for the energy check"),
}

SPECTRUM_KEYS = {
    "input": C.Key("input", str, "", "base feature matrix CSV (optional)"),
    "pure_noise": C.Key("pure_noise", C.parse_bool, False, "use F = 0"),
    "m": C.Key("m", int, 1000, "rows of synthetic F"),
    "n": C.Key("n", int, 1536, "columns of synthetic F"),
    "decay": C.Key("decay", str, "power_law", "power_law|log_linear"),
    "exponent": C.Key("exponent", float, 1.0, "power-law exponent"),
    "sigma_max": C.Key("sigma_max", float, 5.0, "largest synthetic singular value"),
    "sigma_min": C.Key("sigma_min", float, 0.08, "smallest (log_linear) singular value"),
    "rank": C.Key("rank", C.optional(int), 32, "synthetic rank (empty = full)"),
    "data_seed": C.Key("data_seed", int, 0, "seed of the synthetic F"),
    "alpha": NOISE_KEYS["alpha"],
    "seed": NOISE_KEYS["seed"],
    "svd_tol": NOISE_KEYS["svd_tol"],
    "plot": C.Key("plot", C.parse_bool, True, "write SVG plots"),
}

GRADCHECK_KEYS = {
    "n": C.Key("n", int, 8, "batch size N"),
    "d": C.Key("d", int, 16, "embedding dimension"),
    "tau": C.Key("tau", C.float_list, [1.0, 0.02], "temperatures (comma list)"),
    "configs": C.Key("configs", int, 10, "random finite-difference configs"),
    "delta": C.Key("delta", float, 0.05, "Monte-Carlo noise std"),
    "samples": C.Key("samples", int, 100_000, "Monte-Carlo samples"),
    "mode": C.Key("mode", str, "all", "all|fd|mc"),
    "seed": NOISE_KEYS["seed"],
}

TRAIN_KEYS = {
    "encoder": C.Key("encoder", str, "linear", "linear|mlp"),
    "hidden_dim": C.Key("hidden_dim", int, 64, "MLP hidden width"),
    "embed_dim": C.Key("embed_dim", int, 16, "encoder output dimension"),
    "steps": C.Key("steps", int, 300, "gradient steps"),
    "batch_size": C.Key("batch_size", int, 32, "batch size"),
    "learning_rate": C.Key("learning_rate", float, 0.05, "step size"),
    "momentum": C.Key("momentum", float, 0.0, "heavy-ball momentum"),
    "tau": C.Key("tau", float, 0.02, "InfoNCE temperature"),
    "eval_every": C.Key("eval_every", int, 50, "evaluation period (steps)"),
    **NOISE_KEYS,
    "num_pairs": C.Key("num_pairs", int, 512, "training pairs"),
    "num_eval": C.Key("num_eval", int, 256, "evaluation queries"),
    "latent_dim": C.Key("latent_dim", int, 16, "latent dimension"),
    "feature_dim": C.Key("feature_dim", int, 32, "feature dimension"),
    "view_noise": C.Key("view_noise", float, 0.1, "per-view Gaussian noise std"),
    "tied_views": C.Key("tied_views", C.parse_bool, False, "use identical view maps"),
    "num_distractors": C.Key("num_distractors", int, 15, "distractors per eval query"),
    "data_seed": C.Key("data_seed", int, 7, "dataset seed"),
}

SWEEP_KEYS = {
    **TRAIN_KEYS,
    "alphas": C.Key("alphas", C.float_list, [0.0, 0.1, 10.0], "alpha grid"),
    "scalings": C.Key("scalings", C.str_list, ["sublinear"], "scaling grid"),
    "seeds": C.Key("seeds", C.int_list, [0, 1, 2, 3, 4], "seed grid"),
}


# -- commands ---------------------------------------------------------------


def _noise_config(v) -> NoiseConfig:
    return NoiseConfig(
        alpha=v["alpha"],
        scaling=v["scaling"],
        side=v["side"],
        position=v["position"],
        rng=RngStream(v["seed"]),
        svd_tol=v["svd_tol"],
    )


def _kv(path: Path, items: dict) -> None:
    path.write_text("".join(f"{k}={v}\n" for k, v in items.items()))


def _reals(a) -> str:
    return ",".join(format_real(x) for x in np.asarray(a).ravel())


def cmd_inject(v: dict, out: Path, args) -> int:
    if not v["input"]:
        raise C.ConfigError("inject needs --input")
    src = Path(v["input"])
    e = read_matrix_csv(src)
    cfg = _noise_config(v)
    e_out, trace = fanoise_inject(e, cfg)
    if e_out is e:
        shutil.copyfile(src, out / "injected.csv")
    else:
        write_matrix_csv(out / "injected.csv", e_out)
    b, d = e.shape
    items = {
        "rows": b,
        "cols": d,
        "rank_used": trace.rank_used,
        "noise_energy": format_real(trace.noise_energy),
        "expected_noise_energy": format_real(expected_noise_energy(b, d, cfg.alpha, trace.scaling_vector)),
        "zero_input": int(trace.zero_input),
        "scaling_vector": _reals(trace.scaling_vector),
        "per_direction_energy": _reals(trace.per_direction_energy),
    }
    reps = v["repetitions"]
    if reps > 0:
        energies = np.array(
            [fanoise_inject(e, cfg.with_rng(cfg.rng.derive(i + 1)))[1].noise_energy for i in range(reps)]
        )
        mean = float(energies.mean())
        se = float(energies.std(ddof=1) / math.sqrt(reps)) if reps > 1 else float("inf")
        expected = expected_noise_energy(b, d, cfg.alpha, trace.scaling_vector)
        items.update(
            repetitions=reps,
            mc_mean_energy=format_real(mean),
            mc_stderr=format_real(se),
            energy_consistent=int(abs(mean - expected) <= 3 * se),
        )
    _kv(out / "trace.txt", items)
    return EXIT_OK


def _spectrum_matrix(v: dict) -> np.ndarray:
    if v["input"]:
        return read_matrix_csv(v["input"])
    m, n = v["m"], v["n"]
    if v["pure_noise"]:
        return np.zeros((m, n))
    if v["decay"] == "power_law":
        decay = PowerLaw(v["exponent"], v["sigma_max"], v["rank"])
    elif v["decay"] == "log_linear":
        decay = LogLinear(v["sigma_max"], v["sigma_min"], v["rank"])
    else:
        raise C.ConfigError(f"decay must be power_law or log_linear, got {v['decay']!r}")
    return make_spectrum_matrix(SpectrumSpec(m, n, decay, RngStream(v["data_seed"])))


def cmd_spectrum(v: dict, out: Path, args) -> int:
    f = _spectrum_matrix(v)
    report = run_spectrum_experiment(f, v["alpha"], RngStream(v["seed"]), v["svd_tol"])
    report.write_csv(out / "spectrum.csv")
    report.write_similarity_csv(out / "similarity.csv")
    meta = report.meta()
    meta["collapse_index"] = report.collapse_index()
    meta["weyl_max_gap"] = format_real(report.weyl_max_gap)
    meta["weyl_bound"] = format_real(report.weyl_bound)
    _kv(out / "spectrum.meta", meta)
    if v["plot"]:
        (out / "spectrum.svg").write_text(spectrum_svg(report))
        (out / "overlap.svg").write_text(overlap_svg(report))
    return EXIT_OK


def cmd_gradcheck(v: dict, out: Path, args) -> int:
    if v["mode"] not in ("all", "fd", "mc"):
        raise C.ConfigError(f"mode must be all, fd or mc, got {v['mode']!r}")
    result = run_suite(
        n=v["n"],
        d=v["d"],
        taus=tuple(v["tau"]),
        configs=v["configs"],
        seed=v["seed"],
        delta=v["delta"],
        samples=v["samples"],
        mode=v["mode"],
        flip_sign=args.flip_sign_for_testing,
    )
    result.write_csv(out / "gradcheck.csv")
    for rec in result.records:
        log.info("%-14s failures=%d max_abs_err=%.3e", rec.target, rec.failures, rec.abs_err.max())
    if not result.passed:
        worst = result.worst_record()
        r, c = worst.worst()
        print(f"gradcheck FAILED: {worst.target} row={r} col={c}", file=sys.stderr)
        return EXIT_VERIFY
    print("gradcheck passed")
    return EXIT_OK


def _train_setup(v: dict):
    data = make_paired_dataset(
        PairedDatasetSpec(
            num_pairs=v["num_pairs"],
            latent_dim=v["latent_dim"],
            feature_dim=v["feature_dim"],
            view_noise=v["view_noise"],
            num_distractors_eval=v["num_distractors"],
            num_eval=v["num_eval"],
            tied_views=v["tied_views"],
            rng=RngStream(v["data_seed"]),
        )
    )
    noise = NoiseConfig(
        alpha=v["alpha"],
        scaling=v["scaling"],
        side=v["side"],
        position=v["position"],
        rng=RngStream(v["seed"], 1),
        svd_tol=v["svd_tol"],
    )
    cfg = TrainConfig(
        encoder=v["encoder"],
        hidden_dim=v["hidden_dim"],
        embed_dim=v["embed_dim"],
        steps=v["steps"],
        batch_size=v["batch_size"],
        learning_rate=v["learning_rate"],
        momentum=v["momentum"],
        tau=v["tau"],
        noise=noise,
        eval_every=v["eval_every"],
        rng=RngStream(v["seed"]),
    )
    return data, cfg


def cmd_train(v: dict, out: Path, args) -> int:
    data, cfg = _train_setup(v)
    _, rows = train(data, cfg)
    write_train_log(out / "train_log.csv", rows)
    print(f"final p_at_1={rows[-1].eval_p_at_1}")
    return EXIT_OK


def cmd_sweep(v: dict, out: Path, args) -> int:
    data, cfg = _train_setup(v)
    rows = sweep(data, cfg, v["alphas"], v["scalings"], v["seeds"])
    write_sweep(out / "sweep.csv", rows)
    return EXIT_OK


COMMANDS = {
    "inject": (INJECT_KEYS, cmd_inject, "inject FANoise into a matrix file"),
    "spectrum": (SPECTRUM_KEYS, cmd_spectrum, "singular-value spectra of F, GN and F+GN"),
    "gradcheck": (GRADCHECK_KEYS, cmd_gradcheck, "verify InfoNCE gradients and noise expectations"),
    "train": (TRAIN_KEYS, cmd_train, "train the toy contrastive encoder"),
    "sweep": (SWEEP_KEYS, cmd_sweep, "alpha x scaling x seed sweep"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fanoise-lab", description="Seeded, file-based experiments on spectrum-aware embedding noise.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (schema, _, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key=value config file; flags override it")
        p.add_argument("--out-dir", default=".", help="directory for all outputs")
        for key in schema.values():
            flag = "--" + key.name.replace("_", "-")
            if key.parse is C.parse_bool:
                p.add_argument(flag, dest=key.name, nargs="?", const="1", default=None, help=key.help)
            else:
                p.add_argument(flag, dest=key.name, default=None, help=key.help)
        if name == "gradcheck":
            p.add_argument("--flip-sign-for-testing", action="store_true", help=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    schema, handler, _ = COMMANDS[args.command]
    try:
        file_values = C.read_config_file(args.config, schema) if args.config else {}
        flags = {}
        for name, key in schema.items():
            raw = getattr(args, name)
            if raw is not None:
                try:
                    flags[name] = key.parse(raw)
                except ValueError as exc:
                    raise C.ConfigError(f"bad value for --{name.replace('_', '-')}: {exc}") from None
        values = C.resolve(schema, file_values, flags)
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        C.write_snapshot(out / SNAPSHOT, schema, values)
        return handler(values, out, args)
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except NumericalFailureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (C.ConfigError, InvalidInputError, InvalidParameterError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except FanoiseLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
