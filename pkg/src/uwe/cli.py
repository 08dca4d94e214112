"""``uwe`` command line: enhance, histeq, train, eval, metrics (and a synth helper).

Exit codes: 0 ok, 1 usage, 2 I/O, 3 image/manifest format, 4 model, 5 training diverged.
"""

from __future__ import annotations

import math
import os
import sys
import tempfile
from pathlib import Path

import click

from . import colorizer
from .dataset import extract_patches, load_manifest, synth_degrade, synth_scene
from .errors import CheckpointError, FormatError, NonFiniteLoss
from .image import RgbImage, read_ppm, write_ppm
from .metrics import ImageMetrics, MetricsReport, entropy, mse, psnr_from_mse
from .nn import Prng
from .pipeline import enhance

EXIT_USAGE, EXIT_IO, EXIT_FORMAT, EXIT_MODEL, EXIT_DIVERGED = 1, 2, 3, 4, 5

# Patch sampling runs on its own stream so it does not perturb model init.
PATCH_STREAM = 0x5EED_0F_9A7C4E5


class CliFailure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _fail(code: int, message: str):
    raise CliFailure(code, message)


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        _fail(EXIT_IO, f"{what} not found: {path}")
    return p


def _require_out_dir(path: str) -> Path:
    p = Path(path)
    parent = p.parent if str(p.parent) else Path(".")
    if not parent.is_dir():
        _fail(EXIT_IO, f"output directory does not exist: {parent}")
    return p


def _read_bytes(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        _fail(EXIT_IO, f"cannot read {path}: {exc}")


def _read_image(path: Path, context: str = ""):
    data = _read_bytes(path)
    try:
        return read_ppm(data)
    except FormatError as exc:
        _fail(EXIT_FORMAT, f"{context}{path}: {exc}")


def _read_model(path: Path):
    data = _read_bytes(path)
    try:
        return colorizer.load_model(data)
    except CheckpointError as exc:
        _fail(EXIT_MODEL, f"{path}: {exc}")


def write_atomic(path: Path, data: bytes):
    """Write via a temp file in the same directory, then rename into place."""
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        # mkstemp creates 0600; give the result ordinary umask permissions
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_manifest(path: Path):
    try:
        manifest = load_manifest(_read_bytes(path))
    except UnicodeDecodeError as exc:
        _fail(EXIT_FORMAT, f"{path}: not UTF-8 ({exc})")
    except FormatError as exc:
        _fail(EXIT_FORMAT, f"{path}: {exc}")
    if not manifest.entries:
        _fail(EXIT_USAGE, f"manifest {path} has no entries")
    base = path.parent
    for entry in manifest:
        for p in entry.resolve(base):
            _require_file(str(p), f"line {entry.line}: image")
    return manifest, base


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
def cli():
    """Underwater image enhancement: decolor, equalize, recolor."""


@cli.command("enhance")
@click.option("--input", "input_path", required=True, help="Input PPM/PGM.")
@click.option("--model", "model_path", default=None, help="Colorizer checkpoint.")
@click.option("--output", "output_path", required=True, help="Output PPM (PGM with --skip-colorize).")
@click.option("--skip-colorize", is_flag=True, help="Stop after equalization.")
def enhance_cmd(input_path, model_path, output_path, skip_colorize):
    """Run the full pipeline on one image."""
    if model_path is None and not skip_colorize:
        _fail(EXIT_USAGE, "--model is required unless --skip-colorize is given")
    src = _require_file(input_path, "input")
    out = _require_out_dir(output_path)
    model = None if skip_colorize else _read_model(_require_file(model_path, "model"))
    img = _read_image(src)
    try:
        result = enhance(img, model)
    except FormatError as exc:
        _fail(EXIT_FORMAT, f"{src}: {exc}")
    write_atomic(out, write_ppm(result))


@cli.command("histeq")
@click.option("--input", "input_path", required=True)
@click.option("--output", "output_path", required=True)
def histeq_cmd(input_path, output_path):
    """Grayscale-convert if needed, equalize, write a PGM."""
    src = _require_file(input_path, "input")
    out = _require_out_dir(output_path)
    write_atomic(out, write_ppm(enhance(_read_image(src))))


@cli.command("train")
@click.option("--manifest", "manifest_path", required=True)
@click.option("--out", "out_path", required=True)
@click.option("--epochs", type=click.IntRange(min=1), default=10, show_default=True)
@click.option("--lr", type=click.FloatRange(min=0, min_open=True), default=1e-3, show_default=True)
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--patch-size", type=int, default=32, show_default=True)
@click.option("--patches-per-image", type=click.IntRange(min=1), default=16, show_default=True)
@click.option("--batch-size", type=click.IntRange(min=1), default=8, show_default=True)
def train_cmd(manifest_path, out_path, epochs, lr, seed, patch_size, patches_per_image, batch_size):
    """Train a colorizer on (degraded input, reference) pairs."""
    try:
        cfg = colorizer.TrainConfig(epochs=epochs, lr=lr, seed=seed, patch_size=patch_size,
                                    patches_per_image=patches_per_image, batch_size=batch_size)
    except ValueError as exc:
        _fail(EXIT_USAGE, str(exc))
    manifest, base = _load_manifest(_require_file(manifest_path, "manifest"))
    out = _require_out_dir(out_path)

    loaded = []
    for entry in manifest:
        in_path, ref_path = entry.resolve(base)
        inp = _read_image(in_path, f"line {entry.line}: ")
        ref = _read_image(ref_path, f"line {entry.line}: ")
        if not isinstance(ref, RgbImage):
            _fail(EXIT_FORMAT, f"line {entry.line}: reference {ref_path} must be an RGB (P6) image")
        if (inp.width, inp.height) != (ref.width, ref.height):
            _fail(EXIT_FORMAT, f"line {entry.line}: input {inp.width}x{inp.height} "
                               f"and reference {ref.width}x{ref.height} differ")
        loaded.append((entry, inp, ref))

    prng = Prng(seed ^ PATCH_STREAM)
    pairs = []
    for entry, inp, ref in loaded:
        try:
            patches = extract_patches(enhance(inp), ref, patch_size, patches_per_image, prng)
        except FormatError as exc:
            _fail(EXIT_FORMAT, f"line {entry.line}: {exc}")
        pairs.extend(colorizer.patch_tensors(g, c) for g, c in patches)

    def progress(step, loss):
        if step % 100 == 0:
            click.echo(f"step {step} loss {loss:.6g}")

    try:
        model, _ = colorizer.train(pairs, cfg, on_step=progress)
    except NonFiniteLoss as exc:
        _fail(EXIT_DIVERGED, str(exc))
    write_atomic(out, colorizer.save_model(model))


@cli.command("eval")
@click.option("--manifest", "manifest_path", required=True)
@click.option("--model", "model_path", default=None)
@click.option("--report", "report_path", required=True)
@click.option("--skip-colorize", is_flag=True, help="Evaluate the equalized gray output.")
def eval_cmd(manifest_path, model_path, report_path, skip_colorize):
    """Enhance every manifest input and score it against its reference."""
    if model_path is None and not skip_colorize:
        _fail(EXIT_USAGE, "--model is required unless --skip-colorize is given")
    manifest, base = _load_manifest(_require_file(manifest_path, "manifest"))
    model = None if skip_colorize else _read_model(_require_file(model_path, "model"))
    out = _require_out_dir(report_path)

    report = MetricsReport()
    for entry in manifest:
        in_path, ref_path = entry.resolve(base)
        inp = _read_image(in_path, f"line {entry.line}: ")
        ref = _read_image(ref_path, f"line {entry.line}: ")
        try:
            result = enhance(inp, model)
            err = mse(result, ref)
        except FormatError as exc:
            _fail(EXIT_FORMAT, f"line {entry.line}: {exc}")
        report.per_image.append(ImageMetrics(
            input_id=entry.input_path,
            mse=err,
            psnr_db=psnr_from_mse(err),
            entropy_bits=entropy(result),
        ))
    write_atomic(out, report.dumps().encode("utf-8"))


@cli.command("metrics")
@click.option("--a", "a_path", required=True)
@click.option("--b", "b_path", required=True)
def metrics_cmd(a_path, b_path):
    """Print mse, psnr and both entropies for two images."""
    a = _read_image(_require_file(a_path, "image"))
    b = _read_image(_require_file(b_path, "image"))
    try:
        err = mse(a, b)
    except FormatError as exc:
        _fail(EXIT_FORMAT, str(exc))
    click.echo(f"mse={_fmt(err)} psnr={_fmt(psnr_from_mse(err))} "
               f"entropy_a={_fmt(entropy(a))} entropy_b={_fmt(entropy(b))}")


@cli.command("synth")
@click.option("--out", "out_dir", required=True, help="Directory to populate.")
@click.option("--count", type=click.IntRange(min=1), default=8, show_default=True)
@click.option("--size", type=click.IntRange(min=2), default=64, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def synth_cmd(out_dir, count, size, seed):
    """Write synthetic (degraded, reference) PPM pairs plus manifest.tsv."""
    root = Path(out_dir)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        _fail(EXIT_IO, f"cannot create {root}: {exc}")
    prng = Prng(seed)
    lines = ["# degraded\treference"]
    for i in range(count):
        ref = synth_scene(size, size, prng)
        ref_name, in_name = f"ref_{i:03d}.ppm", f"in_{i:03d}.ppm"
        write_atomic(root / ref_name, write_ppm(ref))
        write_atomic(root / in_name, write_ppm(synth_degrade(ref)))
        lines.append(f"{in_name}\t{ref_name}")
    write_atomic(root / "manifest.tsv", ("\n".join(lines) + "\n").encode("utf-8"))


def _fmt(value: float) -> str:
    if math.isinf(value):
        return "inf"
    return f"{value:.6g}"


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="uwe", standalone_mode=False)
    except click.exceptions.UsageError as exc:
        click.echo(f"uwe: {exc.format_message()}", err=True)
        return EXIT_USAGE
    except click.exceptions.Abort:
        click.echo("uwe: aborted", err=True)
        return EXIT_USAGE
    except CliFailure as exc:
        click.echo(f"uwe: {exc}", err=True)
        return exc.code
    except OSError as exc:
        click.echo(f"uwe: {exc}", err=True)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
