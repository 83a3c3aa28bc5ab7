import os
import stat
import subprocess
import sys

import pytest

from cropsig import cli
from cropsig.jpeg.codec import parse_jpeg
from cropsig.jpeg.container import extract_payload
from helpers import make_jpeg


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "in.jpg").write_bytes(make_jpeg(100, 70, seed=4))
    assert cli.main(["keygen", "signer"]) == 0
    return tmp_path


def run(*argv):
    return cli.main(list(argv))


def test_keygen_files(workdir, capsys):
    capsys.readouterr()
    assert run("keygen", "k2", "--cert") == 0
    pk_hex = capsys.readouterr().out.strip()
    assert (workdir / "k2.pub").read_text().strip() == pk_hex
    assert len(bytes.fromhex(pk_hex)) == 33
    assert stat.S_IMODE(os.stat(workdir / "k2.key").st_mode) == 0o600
    assert (workdir / "k2.crt").read_bytes()[:1] == b"\x30"
    assert pk_hex != (workdir / "signer.pub").read_text().strip()


def test_keygen_unwritable(tmp_path):
    # paths no user can create: under a regular file, under a missing dir, inside procfs
    (tmp_path / "plain").write_bytes(b"")
    assert run("keygen", str(tmp_path / "plain" / "k")) == 2
    assert run("keygen", str(tmp_path / "missing" / "k")) == 2
    assert run("keygen", "/proc/cropsig-test-key") == 2


def test_sign_crop_verify(workdir, capsys):
    assert run("sign", "--key", "signer.key", "in.jpg", "s.jpg", "-g", "2") == 0
    assert run("verify", "--pubkey", "signer.pub", "s.jpg") == 0
    assert run("crop", "s.jpg", "c.jpg", "--rect", "1,2,1,2") == 0
    capsys.readouterr()
    assert run("verify", "--pubkey", "signer.pub", "c.jpg") == 0
    out = capsys.readouterr().out
    assert "status: verified" in out
    assert "kind: cropped" in out
    assert "granularity: 2" in out
    assert "rect (i1,i2,j1,j2): 1,2,1,2" in out
    assert "pixels: 64x64" in out


def test_pubkey_forms(workdir):
    run("sign", "--key", "signer.key", "in.jpg", "s.jpg")
    hex_pk = (workdir / "signer.pub").read_text().strip()
    assert run("verify", "--pubkey", hex_pk, "s.jpg") == 0
    assert run("verify", "--pubkey", "signer.key", "s.jpg") == 0
    assert run("verify", "--pubkey", "zz", "s.jpg") == 2
    assert run("verify", "--pubkey", "00" * 10, "s.jpg") == 2


def test_cropped_payload_size_independent_of_rect(workdir):
    run("sign", "--key", "signer.key", "in.jpg", "s.jpg")
    run("crop", "s.jpg", "a.jpg", "--rect", "1,1,1,1")
    run("crop", "s.jpg", "b.jpg", "--rect", "2,5,1,7")
    sizes = {len(extract_payload(parse_jpeg((workdir / n).read_bytes())).to_bytes()) for n in ("a.jpg", "b.jpg")}
    assert sizes == {285}


def test_croppable_smaller_than_baseline(workdir):
    run("sign", "--key", "signer.key", "in.jpg", "a.jpg")
    run("sign", "--key", "signer.key", "in.jpg", "b.jpg", "--scheme", "baseline")
    assert (workdir / "a.jpg").stat().st_size < (workdir / "b.jpg").stat().st_size


def test_verify_failures_exit_1(workdir, capsys):
    run("sign", "--key", "signer.key", "in.jpg", "s.jpg")
    run("keygen", "other")
    capsys.readouterr()
    assert run("verify", "--pubkey", "other.pub", "s.jpg") == 1
    assert "reason: outer-signature" in capsys.readouterr().out
    assert run("verify", "--pubkey", "signer.pub", "in.jpg") == 1
    assert "reason: no-payload" in capsys.readouterr().out


def test_damaged_payload_is_reported_as_malformed(workdir, capsys):
    run("sign", "--key", "signer.key", "in.jpg", "s.jpg")
    data = bytearray((workdir / "s.jpg").read_bytes())
    k = data.index(b"CRSIGJPG")
    data[k + 8] = 0x09  # unsupported payload version
    (workdir / "bad.jpg").write_bytes(bytes(data))
    capsys.readouterr()
    assert run("verify", "--pubkey", "signer.pub", "bad.jpg") == 1
    assert "reason: malformed" in capsys.readouterr().out


def test_usage_errors_exit_2(workdir):
    assert run("sign", "--key", "signer.key", "in.jpg", "s.jpg", "-g", "0") == 2
    assert run("sign", "--key", "nope.key", "in.jpg", "s.jpg") == 2
    assert run("sign", "--key", "signer.key", "missing.jpg", "s.jpg") == 2
    assert run("frobnicate") == 2
    assert run() == 2
    (workdir / "junk.jpg").write_bytes(b"not a jpeg")
    assert run("verify", "--pubkey", "signer.pub", "junk.jpg") == 2
    assert run("crop", "in.jpg", "c.jpg", "--rect", "1,1,1,1") == 2


def test_unsupported_jpeg_exit_2(workdir):
    (workdir / "p.jpg").write_bytes(make_jpeg(32, 32, progressive=True))
    assert run("sign", "--key", "signer.key", "p.jpg", "s.jpg") == 2


def test_duplicate_payload_exit_2(workdir):
    run("sign", "--key", "signer.key", "in.jpg", "s.jpg")
    assert run("sign", "--key", "signer.key", "s.jpg", "s2.jpg") == 2


def test_crop_errors(workdir):
    run("sign", "--key", "signer.key", "in.jpg", "s.jpg")
    assert run("crop", "s.jpg", "c.jpg", "--rect", "1,9,1,1") == 2
    assert run("crop", "s.jpg", "c.jpg", "--rect", "1,1") == 2
    run("crop", "s.jpg", "c.jpg", "--rect", "1,1,1,1")
    assert run("crop", "c.jpg", "c2.jpg", "--rect", "1,1,1,1") == 2


def test_rect_px(workdir, capsys):
    run("sign", "--key", "signer.key", "in.jpg", "s.jpg", "-g", "2")
    capsys.readouterr()
    assert run("crop", "s.jpg", "c.jpg", "--rect-px", "32,0,68,64") == 0
    assert "rect 1,2,2,4" in capsys.readouterr().out
    assert run("verify", "--pubkey", "signer.pub", "c.jpg") == 0
    assert run("crop", "s.jpg", "c.jpg", "--rect-px", "10,0,32,32") == 2
    assert run("crop", "s.jpg", "c.jpg", "--rect-px", "0,0,40,32") == 2
    assert run("crop", "s.jpg", "c.jpg", "--rect-px", "0,0,200,32") == 2


def test_inspect(workdir, capsys):
    capsys.readouterr()
    assert run("inspect", "in.jpg") == 0
    assert "no payload" in capsys.readouterr().out
    run("sign", "--key", "signer.key", "in.jpg", "s.jpg", "-g", "3", "--scheme", "baseline")
    capsys.readouterr()
    assert run("inspect", "s.jpg") == 0
    out = capsys.readouterr().out
    assert "kind: full" in out and "g: 3" in out and "chunks: 1" in out and "scheme: baseline" in out


def test_certificate_is_carried(workdir):
    run("keygen", "c", "--cert")
    run("sign", "--key", "c.key", "--cert", "c.crt", "in.jpg", "s.jpg")
    payload = extract_payload(parse_jpeg((workdir / "s.jpg").read_bytes()))
    assert payload.certificate == (workdir / "c.crt").read_bytes()
    assert run("verify", "--pubkey", "c.pub", "s.jpg") == 0


def test_bench_command(workdir):
    assert run("bench", "--synthesize", "128x96:70", "in.jpg", "--granularities", "1,2",
               "--seed", "3", "--out", "a.csv") == 0
    assert run("bench", "--synthesize", "128x96:70", "in.jpg", "--granularities", "1,2",
               "--seed", "3", "--out", "b.csv") == 0
    a = (workdir / "a.csv").read_text()
    assert a == (workdir / "b.csv").read_text()
    assert len(a.strip().splitlines()) == 1 + 2 * 2 * 2 * 2
    assert run("bench", "--granularities", "0..2", "in.jpg") == 2
    assert run("bench") == 2
    assert run("bench", "in.jpg", "--schemes", "rsa") == 2


def test_bench_seed_from_environment(workdir, monkeypatch):
    monkeypatch.setenv(cli.SEED_ENV, "11")
    run("bench", "in.jpg", "--granularities", "1", "--out", "a.csv")
    run("bench", "in.jpg", "--granularities", "1", "--out", "b.csv")
    assert (workdir / "a.csv").read_text() == (workdir / "b.csv").read_text()


def test_bench_records_failures_and_continues(workdir, capsys):
    (workdir / "bad.jpg").write_bytes(b"\xff\xd8junk")
    assert run("bench", "bad.jpg", "in.jpg", "--granularities", "1", "--seed", "1", "--out", "a.csv") == 0
    assert "failed: bad.jpg" in capsys.readouterr().err
    assert len((workdir / "a.csv").read_text().strip().splitlines()) == 1 + 4


def test_module_entry_point(workdir):
    proc = subprocess.run([sys.executable, "-m", "cropsig", "inspect", "in.jpg"],
                          capture_output=True, text=True, cwd=workdir)
    assert proc.returncode == 0
    assert "no payload" in proc.stdout
