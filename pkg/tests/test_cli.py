import json
import subprocess
import sys
import time
from pathlib import Path

import pytest

from sq8mpc import fixtures
from sq8mpc import model as sq8


@pytest.fixture(scope="module")
def artifacts(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    m = fixtures.fixture_model(seed=0)
    img = fixtures.fixture_image(m, seed=1)
    (tmp / "m.sq8").write_bytes(sq8.serialize(m))
    (tmp / "img.sq8i").write_bytes(sq8.write_image(m.input_shape, img))
    return tmp


def run_cli(*args, timeout=180):
    return subprocess.run(
        [sys.executable, "-m", "sq8mpc.cli", *args],
        capture_output=True, text=True, timeout=timeout,
    )


def test_verify_exits_zero(artifacts):
    r = run_cli("verify", "--model", str(artifacts / "m.sq8"),
                "--input", str(artifacts / "img.sq8i"),
                "--dump-activations", str(artifacts / "golden.bin"))
    assert r.returncode == 0, r.stderr
    doc = json.loads(r.stdout)
    assert doc["identical"] is True
    assert (artifacts / "golden.bin").exists()


def test_run_local_prints_label(artifacts):
    r = run_cli("run-local", "--model", str(artifacts / "m.sq8"),
                "--input", str(artifacts / "img.sq8i"), "--mode", "exact",
                "--seed", "ab" * 32, "--insecure-deterministic", "--stats")
    assert r.returncode == 0, r.stderr
    doc = json.loads(r.stdout)
    assert isinstance(doc["label"], int)
    assert len(doc["reports"]) == 3


def test_run_local_prob_mode(artifacts):
    r = run_cli("run-local", "--model", str(artifacts / "m.sq8"),
                "--input", str(artifacts / "img.sq8i"), "--mode", "prob")
    assert r.returncode == 0, r.stderr


def test_seed_requires_insecure_flag(artifacts):
    r = run_cli("run-local", "--model", str(artifacts / "m.sq8"),
                "--input", str(artifacts / "img.sq8i"), "--seed", "ab" * 32)
    assert r.returncode == 2
    err = json.loads(r.stderr)
    assert err["error"] == "ConfigError"


def test_share_model_emits_three_loadable_files(artifacts):
    from sq8mpc.sharing import load_share

    r = run_cli("share-model", "--model", str(artifacts / "m.sq8"),
                "--out-dir", str(artifacts / "shares"),
                "--seed", "cd" * 32, "--insecure-deterministic")
    assert r.returncode == 0, r.stderr
    for p in (1, 2, 3):
        sm = load_share((artifacts / "shares" / f"party{p}.sq8s").read_bytes())
        assert sm.party == p


def test_bench_sops_constant_bytes(artifacts):
    out = artifacts / "sops.csv"
    r = run_cli("bench", "sops", "--count", "100", "--length", "256,1024",
                "--k", "72", "--out", str(out))
    assert r.returncode == 0, r.stderr
    rows = out.read_text().strip().splitlines()
    assert rows[0] == "count,length,k,bytes_per_party,wall_ms"
    b256 = rows[1].split(",")
    b1024 = rows[2].split(",")
    assert b256[3] == b1024[3]  # hard equality across term counts
    assert out.with_suffix(".png").exists()


def test_bench_trunc_csv_and_figure(artifacts):
    out = artifacts / "trunc.csv"
    r = run_cli("bench", "trunc", "--k-list", "16,32,64", "--count", "16",
                "--proto", "pr", "--proto", "prsp", "--out", str(out))
    assert r.returncode == 0, r.stderr
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "proto,k,count,bytes_per_party,bytes_total,wall_ms"
    rows = [dict(zip(lines[0].split(","), l.split(","))) for l in lines[1:]]
    sp = {int(r["k"]): int(r["bytes_total"]) for r in rows if r["proto"] == "prsp"}
    pr = {int(r["k"]): int(r["bytes_total"]) for r in rows if r["proto"] == "pr"}
    assert 1.8 <= sp[64] / sp[32] <= 2.2
    assert pr[64] / pr[32] >= 3.5
    assert out.with_suffix(".png").exists()


def test_missing_model_is_usage_error():
    r = run_cli("verify", "--model", "/nonexistent.sq8", "--input", "/x.sq8i")
    assert r.returncode == 2


def test_corrupt_model_is_config_error(artifacts):
    bad = artifacts / "bad.sq8"
    blob = bytearray((artifacts / "m.sq8").read_bytes())
    blob[:4] = b"NOPE"
    bad.write_bytes(bytes(blob))
    r = run_cli("verify", "--model", str(bad),
                "--input", str(artifacts / "img.sq8i"))
    assert r.returncode == 2
    err = json.loads(r.stderr)
    assert err["exit_code"] == 2


def test_transport_error_exit_code(artifacts, tmp_path):
    run_cli("share-model", "--model", str(artifacts / "m.sq8"),
            "--out-dir", str(tmp_path / "sh"),
            "--seed", "ee" * 32, "--insecure-deterministic")
    cfg = tmp_path / "net.toml"
    cfg.write_text(
        "k = 72\nconnect_timeout = 1.0\n"
        "[parties.1]\nhost = \"127.0.0.1\"\nport = 9381\n"
        "[parties.2]\nhost = \"127.0.0.1\"\nport = 9382\n"
        "[parties.3]\nhost = \"127.0.0.1\"\nport = 9383\n"
    )
    # Party 2 dials party 1, which never comes up.
    r = run_cli("run-party", "--id", "2", "--config", str(cfg),
                "--shares", str(tmp_path / "sh"), timeout=30)
    assert r.returncode == 3
    err = json.loads(r.stderr)
    assert err["error"] == "TransportError"


def test_run_party_tcp_agrees_with_run_local(artifacts, tmp_path):
    run_cli("share-model", "--model", str(artifacts / "m.sq8"),
            "--out-dir", str(tmp_path / "sh"),
            "--seed", "ff" * 32, "--insecure-deterministic")
    ports = (9391, 9392, 9393)
    cfg = tmp_path / "net.toml"
    cfg.write_text(
        "k = 72\n"
        + "".join(
            f"[parties.{i}]\nhost = \"127.0.0.1\"\nport = {p}\n"
            for i, p in zip((1, 2, 3), ports)
        )
        + f"[insecure]\nseed = \"{'aa' * 32}\"\n"
    )
    procs = []
    for pid in (1, 2, 3):
        args = ["run-party", "--id", str(pid), "--config", str(cfg),
                "--shares", str(tmp_path / "sh"), "--mode", "exact",
                "--insecure-deterministic"]
        if pid == 1:
            args += ["--input", str(artifacts / "img.sq8i")]
        procs.append(subprocess.Popen(
            [sys.executable, "-m", "sq8mpc.cli", *args],
            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True))
        time.sleep(0.1)
    labels = []
    for p in procs:
        out, err = p.communicate(timeout=180)
        assert p.returncode == 0, err
        labels.append(json.loads(out)["label"])
    assert len(set(labels)) == 1

    r = run_cli("run-local", "--model", str(artifacts / "m.sq8"),
                "--input", str(artifacts / "img.sq8i"), "--mode", "exact",
                "--seed", "aa" * 32, "--insecure-deterministic")
    assert json.loads(r.stdout)["label"] == labels[0]
