"""Operator entry points.

Subcommands: share-model, run-party, run-local, verify, bench sops,
bench trunc.  Failures print a machine-readable error envelope to stderr
and exit 1 (verification mismatch), 2 (configuration) or 3 (transport).
"""

from __future__ import annotations

import json
import random
import sys
from pathlib import Path

import click
import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import arith, bench, engine, oracle, report
from . import model as sq8
from .errors import ConfigError, Sq8Error, VerificationError
from .harness import run_parties
from .ring import DEFAULT_WIDTH
from .session import PartySession, TruncMode
from .sharing import dump_share, load_share, share_model
from .transport import tcp_hub

_MODES = {"prob": TruncMode.PROBABILISTIC, "exact": TruncMode.EXACT}


def _parse_seed(hex_seed: str | None, insecure: bool) -> bytes | None:
    if hex_seed is None:
        return None
    if not insecure:
        raise ConfigError(
            "fixed seeds require --insecure-deterministic (test mode only)")
    return bytes.fromhex(hex_seed)


def _load_config(path: Path) -> dict:
    with open(path, "rb") as f:
        cfg = tomllib.load(f)
    if "parties" not in cfg:
        raise ConfigError("config missing [parties.N] endpoint tables")
    endpoints = {}
    for pid, ent in cfg["parties"].items():
        endpoints[int(pid)] = (ent["host"], int(ent["port"]))
    if sorted(endpoints) != [1, 2, 3]:
        raise ConfigError("config must define parties 1, 2 and 3")
    cfg["endpoints"] = endpoints
    return cfg


@click.group()
def cli():
    """Three-party secure inference for SQ8 quantized models."""


@cli.command("share-model")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--k", default=DEFAULT_WIDTH, show_default=True)
@click.option("--seed", default=None, help="hex master seed (test mode)")
@click.option("--insecure-deterministic", is_flag=True)
def share_model_cmd(model_path, out_dir, k, seed, insecure_deterministic):
    """Split a model into three per-party share files."""
    blob = Path(model_path).read_bytes()
    model = sq8.load(blob)
    master = _parse_seed(seed, insecure_deterministic)
    rng = random.Random(master) if master is not None else random.SystemRandom()
    shares = share_model(model, k, rng)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for p, sm in shares.items():
        (out / f"party{p}.sq8s").write_bytes(dump_share(sm))
    click.echo(json.dumps({
        "out_dir": str(out),
        "k": k,
        "files": [f"party{p}.sq8s" for p in sorted(shares)],
    }))


@cli.command("run-party")
@click.option("--id", "party", required=True, type=click.IntRange(1, 3))
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True))
@click.option("--shares", "shares_dir", required=True,
              type=click.Path(exists=True))
@click.option("--input", "input_path", default=None, type=click.Path())
@click.option("--mode", type=click.Choice(sorted(_MODES)), default="exact",
              show_default=True)
@click.option("--insecure-deterministic", is_flag=True)
def run_party_cmd(party, config_path, shares_dir, input_path, mode,
                  insecure_deterministic):
    """Run one party over TCP; prints the label and its traffic stats."""
    cfg = _load_config(Path(config_path))
    shared = load_share(
        (Path(shares_dir) / f"party{party}.sq8s").read_bytes())
    k = int(cfg.get("k", shared.k))
    if k != shared.k:
        raise ConfigError(f"config k={k} but share file was dealt at k={shared.k}")

    image = None
    if party == 1:
        if input_path is None:
            raise ConfigError("party 1 needs --input (it shares the image)")
        _, image = sq8.read_image(Path(input_path).read_bytes())

    master = None
    if insecure_deterministic:
        hex_seed = cfg.get("insecure", {}).get("seed")
        master = _parse_seed(hex_seed, True) if hex_seed else None

    hub = tcp_hub(party, k, cfg["endpoints"],
                  connect_timeout=float(cfg.get("connect_timeout", 30.0)))
    sess = PartySession(hub, k, _MODES[mode], master_seed=master)
    try:
        pl = engine.plan(shared.public, k, _MODES[mode])
        label, rep = engine.infer_with_stats(sess, shared, pl, image)
        click.echo(json.dumps({
            "label": label,
            "report": rep,
            "peers": sess.stats.to_json(),
        }))
    finally:
        sess.close()


@cli.command("run-local")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--mode", type=click.Choice(sorted(_MODES)), default="exact",
              show_default=True)
@click.option("--k", default=DEFAULT_WIDTH, show_default=True)
@click.option("--seed", default=None, help="hex master seed (test mode)")
@click.option("--insecure-deterministic", is_flag=True)
@click.option("--stats", "with_stats", is_flag=True, help="print full reports")
def run_local_cmd(model_path, input_path, mode, k, seed, insecure_deterministic,
                  with_stats):
    """All-in-one local inference with three in-process parties."""
    model = sq8.load(Path(model_path).read_bytes())
    _, image = sq8.read_image(Path(input_path).read_bytes())
    master = _parse_seed(seed, insecure_deterministic)
    rng = random.Random(master) if master is not None else random.SystemRandom()
    shares = share_model(model, k, rng)
    pl = engine.plan(shares[1].public, k, _MODES[mode])

    def proto(sess):
        return engine.infer_with_stats(
            sess, shares[sess.party], pl,
            image if sess.party == 1 else None)

    res = run_parties(proto, k, mode=_MODES[mode], master_seed=master)
    labels = [r[0] for r in res]
    if len(set(labels)) != 1:
        raise VerificationError(f"parties disagree on the label: {labels}")
    payload = {"label": labels[0], "k": k, "mode": mode}
    if with_stats:
        payload["reports"] = [r[1] for r in res]
    click.echo(json.dumps(payload))


@cli.command("verify")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--k", default=DEFAULT_WIDTH, show_default=True)
@click.option("--dump-activations", "dump_path", default=None, type=click.Path())
def verify_cmd(model_path, input_path, k, dump_path):
    """Exact-mode secure inference diffed against the cleartext oracle
    at every layer; exit 0 iff identical."""
    model = sq8.load(Path(model_path).read_bytes())
    _, image = sq8.read_image(Path(input_path).read_bytes())
    label, acts = oracle.reference_infer(model, image)
    if dump_path:
        Path(dump_path).write_bytes(oracle.dump_activations(acts))

    shares = share_model(model, k, random.SystemRandom())
    pl = engine.plan(shares[1].public, k, TruncMode.EXACT)

    def proto(sess):
        bufs = {pl.input_tensor: engine._share_image(
            sess, pl, image if sess.party == 1 else None)}
        opened, got_label = {}, None
        for step in pl.steps:
            got = engine._run_step(sess, shares[sess.party], pl, step, bufs)
            if got is not None:
                got_label = got
            else:
                opened[step.out_tensor] = arith.open_values(
                    sess, bufs[step.out_tensor])
        return got_label, opened

    res = run_parties(proto, k, mode=TruncMode.EXACT)
    secure_label, opened = res[0]
    mismatches = []
    for tid, vals in opened.items():
        want = acts[tid].tolist()
        if vals != want:
            bad = sum(1 for a, b in zip(vals, want) if a != b)
            mismatches.append({"tensor": tid, "bad_elements": bad})
    if secure_label != label:
        mismatches.append({"tensor": "label",
                           "secure": secure_label, "oracle": label})
    if mismatches:
        raise VerificationError(json.dumps(mismatches))
    click.echo(json.dumps({
        "label": label,
        "tensors_checked": sorted(opened),
        "identical": True,
    }))


@click.group()
def bench_group():
    """Microbenchmarks (CSV plus a rendered figure)."""


cli.add_command(bench_group, name="bench")


def _emit_bench(rows, header, out, plot, x, ys, group_by, title):
    text = report.rows_to_csv(header, rows)
    if out:
        Path(out).write_text(text)
        if plot:
            fig_path = Path(out).with_suffix(".png")
            report.render_figure(rows, x, ys, group_by, title, fig_path)
            click.echo(json.dumps({"csv": str(out), "figure": str(fig_path)}))
        else:
            click.echo(json.dumps({"csv": str(out)}))
    else:
        click.echo(text, nl=False)


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError as exc:
        raise ConfigError(f"bad integer list {text!r}") from exc


@bench_group.command("sops")
@click.option("--count", default="1000", show_default=True,
              help="comma-separated batch sizes")
@click.option("--length", default="256,512,768,1024", show_default=True,
              help="comma-separated term counts")
@click.option("--k", default=DEFAULT_WIDTH, show_default=True)
@click.option("--out", default=None, type=click.Path())
@click.option("--plot/--no-plot", default=True, show_default=True)
def bench_sops_cmd(count, length, k, out, plot):
    """Sum-of-products sweep: traffic is flat across term counts."""
    rows = [
        bench.bench_sops(c, ln, k)
        for c in _int_list(count) for ln in _int_list(length)
    ]
    _emit_bench(rows, ["count", "length", "k", "bytes_per_party", "wall_ms"],
                out, plot, "length", ["bytes_per_party", "wall_ms"], "count",
                f"sum-of-products, k={k}")


@bench_group.command("trunc")
@click.option("--proto", type=click.Choice(["pr", "prsp", "exact"]),
              multiple=True, default=("pr", "prsp"), show_default=True)
@click.option("--k-list", default="16,32,64", show_default=True)
@click.option("--count", default=64, show_default=True)
@click.option("--out", default=None, type=click.Path())
@click.option("--plot/--no-plot", default=True, show_default=True)
def bench_trunc_cmd(proto, k_list, count, out, plot):
    """Truncation traffic versus ring width."""
    rows = [
        bench.bench_trunc(p, k, count)
        for p in proto for k in _int_list(k_list)
    ]
    _emit_bench(rows,
                ["proto", "k", "count", "bytes_per_party", "bytes_total",
                 "wall_ms"],
                out, plot, "k", ["bytes_total", "wall_ms"], "proto",
                "truncation traffic vs ring width")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except Sq8Error as exc:
        sys.stderr.write(json.dumps({
            "error": type(exc).__name__,
            "message": str(exc),
            "exit_code": exc.exit_code,
        }) + "\n")
        return exc.exit_code
    except click.ClickException as exc:
        sys.stderr.write(json.dumps({
            "error": "UsageError",
            "message": exc.format_message(),
            "exit_code": 2,
        }) + "\n")
        return 2
    except click.exceptions.Abort:
        return 2


if __name__ == "__main__":
    sys.exit(main())
