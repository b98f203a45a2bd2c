import io
import os
import subprocess
import sys

import numpy as np
import pytest

from cdma.cli import EXIT_CONFIG, EXIT_CORRUPT, EXIT_IO, fmt, run
from cdma.tensor import ActivationTensor, dump_tensor, load_tensor


def cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run([str(a) for a in argv], out, err)
    return code, out.getvalue(), err.getvalue()


def kv(text):
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line)


@pytest.fixture
def zero_tensor(tmp_path):
    path = tmp_path / "zero.cdma"
    path.write_bytes(dump_tensor(ActivationTensor(1, 1, 32, 32, "NCHW", np.zeros(1024, np.uint32))))
    return path


@pytest.fixture
def sparse_tensor(tmp_path):
    path = tmp_path / "t.cdma"
    code, _, _ = cli("gen", "tensor", "--dims", "2,8,16,16", "--density", "0.4",
                     "--clustering", "0.8", "--seed", "3", "-o", path)
    assert code == 0
    return path


def test_fmt_three_significant_digits():
    assert fmt(32.0) == "32.0"
    assert fmt(1.5) == "1.50"
    assert fmt(0.38461) == "0.385"
    assert fmt(297.3696) == "297"
    assert fmt(2048.0) == "2.05e+03"


def test_compress_all_zero_reports_32x(zero_tensor, tmp_path):
    code, out, _ = cli("compress", "--codec", "zvc", "--window", "4096",
                       "-i", zero_tensor, "-o", tmp_path / "z.cdmz")
    assert code == 0
    fields = kv(out)
    assert fields["payload_ratio"] == "32.0"
    assert fields["payload_bytes"] == "128"
    assert fields["output_bytes"] == "138"


@pytest.mark.parametrize("codec", ["zvc", "rle", "deflate"])
def test_file_roundtrip(sparse_tensor, tmp_path, codec):
    z = tmp_path / f"t.{codec}.cdmz"
    raw = tmp_path / "t.raw"
    assert cli("compress", "--codec", codec, "-i", sparse_tensor, "-o", z)[0] == 0
    assert cli("decompress", "-i", z, "-o", raw)[0] == 0
    original = sparse_tensor.read_bytes()
    assert raw.read_bytes() == original[24:]
    full = tmp_path / "t2.cdma"
    assert cli("decompress", "-i", z, "-o", full, "--dims", "2,8,16,16")[0] == 0
    assert full.read_bytes() == original


def test_corrupt_input_fails_without_output(sparse_tensor, tmp_path):
    z = tmp_path / "t.cdmz"
    cli("compress", "-i", sparse_tensor, "-o", z)
    bad = tmp_path / "bad.cdmz"
    bad.write_bytes(z.read_bytes()[:-7])
    target = tmp_path / "out.raw"
    code, _, err = cli("decompress", "-i", bad, "-o", target)
    assert code == EXIT_CORRUPT
    assert "corrupt" in err
    assert not target.exists()
    assert [p.name for p in tmp_path.iterdir() if p.name.startswith(".cdma-")] == []


def test_corrupt_tensor_file(tmp_path):
    bad = tmp_path / "bad.cdma"
    bad.write_bytes(b"NOPE" + bytes(40))
    assert cli("analyze", "-i", bad)[0] == EXIT_CORRUPT


def test_missing_file_is_io_error(tmp_path):
    assert cli("analyze", "-i", tmp_path / "missing.cdma")[0] == EXIT_IO


def test_bad_window_is_config_error(sparse_tensor, tmp_path):
    out = tmp_path / "x.cdmz"
    assert cli("compress", "--window", "1000", "-i", sparse_tensor, "-o", out)[0] == EXIT_CONFIG
    assert not out.exists()


def test_usage_error():
    assert cli("compress")[0] == 2


def test_analyze_grid_is_stable(sparse_tensor):
    code, out, _ = cli("analyze", "-i", sparse_tensor, "--layouts", "all")
    assert code == 0
    assert out == cli("analyze", "-i", sparse_tensor, "--layouts", "all")[1]
    fields = kv(out)
    assert fields["density"] == "0.400"
    zvc = {fields[f"ratio.zvc.{l}"] for l in ("nchw", "nhwc", "chwn")}
    assert len(zvc) == 1
    assert float(fields["ratio.rle.nchw"]) > float(fields["ratio.rle.nhwc"])
    assert len([k for k in fields if k.startswith("ratio.")]) == 9


def test_analyze_golden(zero_tensor):
    code, out, _ = cli("analyze", "-i", zero_tensor, "--layouts", "NCHW", "--format", "kv")
    assert code == 0
    assert out == (
        "density=0.00\n"
        "sparsity=1.00\n"
        "ratio.zvc.nchw=29.7\n"
        "payload_ratio.zvc.nchw=32.0\n"
        "ratio.rle.nchw=341\n"
        "payload_ratio.rle.nchw=2.05e+03\n"
        "ratio.deflate.nchw=" + out.split("ratio.deflate.nchw=")[1].split("\n")[0] + "\n"
        "payload_ratio.deflate.nchw=" + out.split("payload_ratio.deflate.nchw=")[1]
    )


def test_gen_tensor_density(sparse_tensor):
    t = load_tensor(sparse_tensor.read_bytes())
    assert t.dims == (2, 8, 16, 16)
    assert np.count_nonzero(t.data) == round(0.4 * t.size)


def test_gen_trace_stdout_and_file(tmp_path):
    code, out, _ = cli("gen", "trace", "--preset", "alexnet", "--density", "0.506")
    assert code == 0
    assert "conv0,297369600,0.506," in out
    path = tmp_path / "a.trace"
    assert cli("gen", "trace", "--preset", "nin", "-o", path)[0] == 0
    assert path.read_text().count("\n") > 10


def test_simulate_two_layer_trace(tmp_path):
    trace = tmp_path / "two.trace"
    trace.write_text("# two layers\nL0,64000000,0.2,2,2,4\nL1,16000000,1.0,2,2,1\n")
    code, out, _ = cli("simulate", "-i", trace, "--pcie-gbps", "16", "--comp-budget-gbps", "200")
    assert code == 0
    fields = kv(out)
    assert fields["speedup"] == "1.50"
    assert fields["vdnn_ms"] == "12.0"
    assert fields["cdma_ms"] == "8.00"
    assert "speedup vs vDNN 1.50" in out


def test_simulate_density_closed_form(tmp_path):
    trace = tmp_path / "d.trace"
    trace.write_text("a,64000000,0.21875,2,2\nb,16000000,1.0,2,2\n")
    code, out, _ = cli("simulate", "-i", trace, "--ratio-source", "closed-form", "--format", "kv")
    assert code == 0
    fields = kv(out)
    assert fields["layer.a.ratio"] == "4.00"
    assert fields["layer.b.ratio"] == "1.00"  # 32/33 clamps to raw transfer
    assert fields["speedup"] == "1.50"


def test_simulate_preset_orders_policies(tmp_path):
    trace = tmp_path / "a.trace"
    cli("gen", "trace", "--preset", "alexnet", "--density", "0.506", "-o", trace)
    code, out, _ = cli("simulate", "-i", trace, "--codec", "zvc", "--format", "kv")
    assert code == 0
    f = {k: float(v) for k, v in kv(out).items() if k in ("oracle_ms", "cdma_ms", "vdnn_ms")}
    assert f["oracle_ms"] <= f["cdma_ms"] <= f["vdnn_ms"]


def test_simulate_rejects_bad_platform(tmp_path):
    trace = tmp_path / "t.trace"
    trace.write_text("a,100,0.5,1,1\n")
    assert cli("simulate", "-i", trace, "--comp-budget-gbps", "300")[0] == EXIT_CONFIG
    assert cli("simulate", "-i", trace, "--codec", "rle", "--ratio-source", "closed-form")[0] == EXIT_CONFIG


def test_simulate_malformed_trace(tmp_path):
    trace = tmp_path / "t.trace"
    trace.write_text("a,1,2\n")
    assert cli("simulate", "-i", trace)[0] == EXIT_CORRUPT


def test_bench_reports_all_codecs():
    code, out, _ = cli("bench", "--bytes", "2e5", "--density", "0.4", "--repeat", "1")
    assert code == 0
    fields = kv(out)
    for name in ("zvc", "rle", "deflate"):
        assert float(fields[f"{name}.compress_Bps"]) > 0
        assert float(fields[f"{name}.decompress_Bps"]) > 0


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "cdma", "gen", "trace", "--preset", "vgg"],
                          capture_output=True, text=True, env=dict(os.environ))
    assert proc.returncode == 0
    assert proc.stdout.startswith("# preset vgg")
