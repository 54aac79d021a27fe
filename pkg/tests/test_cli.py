import subprocess
import sys

import numpy as np
import pytest

from saecrypt import cli, codec, sae
from saecrypt.image_io import Image, load_image, save_image

FAST = ["--epochs", "3", "--pretrain-epochs", "3", "--seed", "4"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory, astronaut):
    d = tmp_path_factory.mktemp("cli")
    save_image(Image(astronaut.data[:64, :96]), d / "rgb.png")
    save_image(Image(astronaut.data[:64, :96, 1]), d / "gray.pgm")
    return d


@pytest.fixture(scope="module")
def trained(workdir):
    model = workdir / "m.saem"
    assert cli.main(["train", str(workdir / "rgb.png"), "--out", str(model), *FAST]) == 0
    return model


def run(*args):
    return cli.main([str(a) for a in args])


def test_train_writes_five_layer_model(trained, capsys):
    assert sae.load_model(trained).layer_dims == (64, 16, 4, 16, 64)


def test_train_prints_cost(workdir, capsys):
    run("train", workdir / "gray.pgm", "--out", workdir / "t.saem", *FAST)
    line = capsys.readouterr().out.strip()
    assert line.startswith("cost=") and float(line[5:]) > 0


def test_train_is_reproducible(workdir, trained):
    again = workdir / "again.saem"
    run("train", workdir / "rgb.png", "--out", again, *FAST)
    assert again.read_bytes() == trained.read_bytes()


def test_train_three_layer_variant(workdir):
    out = workdir / "three.saem"
    assert run("train", workdir / "gray.pgm", "--out", out, "--layers", "64,16,64", *FAST) == 0
    assert sae.load_model(out).layer_dims == (64, 16, 64)


@pytest.mark.parametrize("layers", ["64,16,8", "64,16,16,64", "60,16,60", "a,b"])
def test_train_rejects_bad_layers(workdir, layers):
    assert run("train", workdir / "gray.pgm", "--out", workdir / "x.saem", "--layers", layers) == 1


def test_compress_payload_sizes(workdir, trained, capsys):
    h1, h2, rgb = workdir / "h1.saec", workdir / "h2.saec", workdir / "rgb.saec"
    assert run("compress", workdir / "gray.pgm", "--model", trained, "--bottleneck", "h1", "--out", h1) == 0
    assert run("compress", workdir / "gray.pgm", "--model", trained, "--bottleneck", "h2", "--out", h2) == 0
    assert run("compress", workdir / "rgb.png", "--model", trained, "--out", rgb) == 0
    tiles = (64 // 8) * (96 // 8)
    assert len(codec.read_compressed(h1).codes) == tiles * 16
    assert len(codec.read_compressed(h2).codes) == tiles * 4
    assert len(codec.read_compressed(rgb).codes) == 3 * tiles * 4
    assert "compression_ratio=16" in capsys.readouterr().out


def test_compress_bad_bottleneck(workdir, trained):
    assert run("compress", workdir / "gray.pgm", "--model", trained, "--bottleneck", "h3",
               "--out", workdir / "x.saec") == 1


def test_encrypt_decrypt_reconstruct(workdir, trained):
    saec = workdir / "p.saec"
    run("compress", workdir / "rgb.png", "--model", trained, "--out", saec)
    enc, key, dec = workdir / "p.enc", workdir / "p.key", workdir / "p.dec"
    assert run("encrypt", saec, "--out", enc, "--key", key) == 0
    assert codec.read_compressed(enc).encrypted
    assert codec.read_compressed(enc).codes != codec.read_compressed(saec).codes
    assert run("decrypt", enc, "--key", key, "--out", dec) == 0
    assert dec.read_bytes() == saec.read_bytes()

    enc2, key2 = workdir / "p2.enc", workdir / "p2.key"
    run("encrypt", saec, "--out", enc2, "--key", key2)
    assert enc2.read_bytes() == enc.read_bytes() and key2.read_bytes() == key.read_bytes()

    a, b = workdir / "a.png", workdir / "b.png"
    assert run("reconstruct", saec, "--model", trained, "--out", a) == 0
    assert run("reconstruct", dec, "--model", trained, "--out", b) == 0
    assert a.read_bytes() == b.read_bytes()
    assert load_image(a).data.shape == (64, 96, 3)


def test_decrypt_missing_key(workdir, trained):
    saec = workdir / "q.saec"
    run("compress", workdir / "rgb.png", "--model", trained, "--out", saec)
    run("encrypt", saec, "--out", workdir / "q.enc", "--key", workdir / "q.key")
    assert run("decrypt", workdir / "q.enc", "--key", workdir / "nokey", "--out", workdir / "q.dec") == 2


def test_reconstruct_encrypted_is_data_error(workdir, trained):
    saec = workdir / "r.saec"
    run("compress", workdir / "rgb.png", "--model", trained, "--out", saec)
    run("encrypt", saec, "--out", workdir / "r.enc", "--key", workdir / "r.key")
    assert run("reconstruct", workdir / "r.enc", "--model", trained, "--out", workdir / "r.png") == 2


def test_untrained_model_reconstructs(workdir):
    model = sae.init_model([64, 16, 64], np.random.default_rng(0))
    sae.save_model(model, workdir / "raw.saem")
    run("compress", workdir / "gray.pgm", "--model", workdir / "raw.saem", "--out", workdir / "raw.saec")
    assert run("reconstruct", workdir / "raw.saec", "--model", workdir / "raw.saem",
               "--out", workdir / "raw.pgm") == 0
    assert load_image(workdir / "raw.pgm").data.shape == (64, 96, 1)


def test_evaluate_identical(workdir, capsys):
    assert run("evaluate", workdir / "rgb.png", workdir / "rgb.png", "--records") == 0
    out = capsys.readouterr().out
    for ch in "RGB":
        assert f"mse.{ch}=0.0" in out
        assert f"psnr.{ch}=infinite" in out


def test_evaluate_text_table(workdir, capsys):
    run("evaluate", workdir / "rgb.png", workdir / "rgb.png", "--correlation")
    lines = capsys.readouterr().out.splitlines()
    assert [l.split()[0] for l in lines[1:4]] == ["R", "G", "B"]
    assert "10 trials" in lines[-1]


def test_evaluate_ciphertext(workdir, trained, capsys):
    saec = workdir / "e.saec"
    run("compress", workdir / "rgb.png", "--model", trained, "--bottleneck", "h1", "--out", saec)
    run("encrypt", saec, "--out", workdir / "e.enc", "--key", workdir / "e.key")
    capsys.readouterr()
    assert run("evaluate", workdir / "e.enc", "--records") == 0
    records = dict(l.split("=") for l in capsys.readouterr().out.splitlines())
    assert abs(float(records["correlation.horizontal"])) < 0.1
    assert records["correlation.trials"] == "10"


def test_config_file_overridden_by_flags(workdir):
    cfg = workdir / "run.cfg"
    cfg.write_text("# hyperparameters\nlayers=64,8,64\nepochs=2\npretrain-epochs=2\nseed=4\n")
    out = workdir / "cfg.saem"
    assert run("--config", cfg, "train", workdir / "gray.pgm", "--out", out) == 0
    assert sae.load_model(out).layer_dims == (64, 8, 64)
    assert run("--config", cfg, "train", workdir / "gray.pgm", "--out", out, "--layers", "64,4,64") == 0
    assert sae.load_model(out).layer_dims == (64, 4, 64)


def test_config_unknown_key(workdir):
    cfg = workdir / "bad.cfg"
    cfg.write_text("nonsense=1\n")
    assert run("--config", cfg, "train", workdir / "gray.pgm", "--out", workdir / "z.saem") == 1


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["train"], ["encrypt", "x.saec", "--r", "abc"]])
def test_usage_errors_exit_1(argv):
    with pytest.raises(SystemExit) as exc:
        cli.main(argv)
    assert exc.value.code == 1


def test_constant_image_correlation_is_numeric_failure(workdir):
    save_image(Image(np.full((16, 16), 40, dtype=np.uint8)), workdir / "flat.pgm")
    assert run("evaluate", workdir / "flat.pgm") == 3


def test_missing_input_is_data_error(workdir):
    assert run("compress", workdir / "nope.png", "--model", workdir / "m.saem", "--out", workdir / "n.saec") == 2


def test_module_entry_point(workdir, trained):
    proc = subprocess.run(
        [sys.executable, "-m", "saecrypt", "compress", str(workdir / "gray.pgm"),
         "--model", str(trained), "--out", str(workdir / "sub.saec")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "payload_bytes=384" in proc.stdout
