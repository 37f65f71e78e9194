"""sq8-convert: TFLite flatbuffer in, SQ8 model out."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .convert import ConversionError, convert


@click.command()
@click.argument("tflite_in", type=click.Path(exists=True))
@click.argument("sq8_out", type=click.Path())
@click.option("--dump-json", "dump_json", default=None, type=click.Path(),
              help="write the conversion manifest (tensor mapping, headroom)")
def cli(tflite_in, sq8_out, dump_json):
    blob, manifest = convert(Path(tflite_in).read_bytes())
    Path(sq8_out).write_bytes(blob)
    if dump_json:
        Path(dump_json).write_text(json.dumps(manifest, indent=2))
    click.echo(json.dumps({
        "out": sq8_out,
        "bytes": len(blob),
        "k_min": manifest["k_min"],
        "conv_layers": manifest["conv_layers"],
    }))


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except ConversionError as exc:
        sys.stderr.write(json.dumps({
            "error": "ConversionError", "message": str(exc), "exit_code": 2,
        }) + "\n")
        return 2
    except click.ClickException as exc:
        sys.stderr.write(json.dumps({
            "error": "UsageError", "message": exc.format_message(),
            "exit_code": 2,
        }) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
