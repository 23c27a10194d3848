import argparse
import sys

from .convert import convert


def main(argv=None):
    parser = argparse.ArgumentParser(prog="lasa-convert")
    parser.add_argument("--input", required=True, help="mat file or directory of mat files")
    parser.add_argument("--output", required=True, help="output directory for CSVs")
    args = parser.parse_args(argv)
    try:
        manifest = convert(args.input, args.output)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"converted {len(manifest['shapes'])} shape(s) into {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
