"""The ring exchange, naive and corrected.

Every rank of the naive program sends to its left neighbour first.  Under
synchronous communication nobody is receiving, so the ranks wait on each
other in a circle.  The protocol checker rejects the same program before it
runs, pointing at the first rank whose projection starts with a receive.

    python demos/ring_deadlock.py [SIZE]
"""
import sys

from partypes import conform, simulate
from partypes.cli import corpus_file
from partypes.bindings import BindingsFile
from partypes.parser import parse_program_file, parse_protocol_file

size = int(sys.argv[1]) if len(sys.argv) > 1 else 4
protocol = parse_protocol_file(corpus_file("fdiff.pt"))
inputs = BindingsFile.load(corpus_file("fdiff.bindings.json"))

for name in ("fdiff_naive.mpp", "fdiff.mpp"):
    prog = parse_program_file(corpus_file(name))
    b = inputs.for_size(size, prog)
    print(f"== {name} at size {size}")
    report = simulate.run(prog, b)
    print(simulate.format_report(report), end="")
    print(conform.format_report(conform.check_conformance(prog, protocol, b)))
