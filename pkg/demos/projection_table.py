"""Per-rank view of the finite differences protocol.

Rank 0 sends before it receives, the last rank receives first, and everyone
in between receives from the left, sends both ways, then receives from the
right.  A program following these rows cannot deadlock.

    python demos/projection_table.py [SIZE]
"""
import sys

from partypes import project
from partypes.cli import corpus_file
from partypes.parser import parse_protocol_file

size = int(sys.argv[1]) if len(sys.argv) > 1 else 5
p = parse_protocol_file(corpus_file("fdiff.pt"))
table = project.expansion_table(p, size)
rows = {
    r: [str(a).split(" :")[0] for a in acts if isinstance(a, (project.SendA, project.RecvA))]
    for r, acts in table.items()
}
width = max(len(s) for row in rows.values() for s in row) + 2
print("".join(f"rank {r}".ljust(width) for r in rows))
for k in range(len(rows[0])):
    print("".join(rows[r][k].ljust(width) for r in rows))
