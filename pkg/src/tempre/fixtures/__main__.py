import argparse
import sys

from . import bundled_path, dump_native, generate_fixture, mini_spec, regenerate

parser = argparse.ArgumentParser(prog="python -m tempre.fixtures", description="regenerate the bundled mini corpora")
parser.add_argument("--out", help="write here instead of over the bundled files")
parser.add_argument("--check", action="store_true", help="only verify the bundled files match the generator")
args = parser.parse_args()

if args.check:
    stale = [name for name in ("matres", "tbdense", "tddman")
             if bundled_path(f"mini_{name}").read_text("utf-8") != dump_native(generate_fixture(mini_spec(name)))]
    for name in stale:
        print(f"mini_{name}.json differs from the generator")
    print("ok" if not stale else f"{len(stale)} stale")
    sys.exit(1 if stale else 0)

for path in regenerate(args.out):
    print(path)
