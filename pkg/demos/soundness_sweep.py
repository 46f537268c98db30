"""Randomized check of the central claim on generated protocols.

For each generated protocol a canonical program is synthesized from its
projection; it must conform and run without deadlock.  Then programs are
mutated by swapping two adjacent point-to-point calls.  A mutant may be
rejected by the checker or may happen to be harmless, but it must never be
accepted and then deadlock.

    python demos/soundness_sweep.py [COUNT] [SEED]
"""
import random
import sys
from collections import Counter

from partypes import conform, generate, simulate
from partypes.bindings import Bindings

count = int(sys.argv[1]) if len(sys.argv) > 1 else 100
rng = random.Random(int(sys.argv[2]) if len(sys.argv) > 2 else 1)

outcomes = Counter()
for k in range(count):
    size = 2 + k % 5
    p = generate.random_wellformed(rng, size)
    prog = simulate.synthesize(p, size)
    b = Bindings(size)
    outcomes["canonical conforms"] += conform.check_conformance(prog, p, b).passed
    outcomes["canonical deadlock-free"] += simulate.run(prog, b).verdict == "ok"

mutants = Counter()
while sum(mutants.values()) < count:
    size = rng.randint(2, 6)
    p = generate.random_wellformed(rng, size)
    m = generate.swap_send_recv(simulate.synthesize(p, size), rng)
    if m is None:
        continue
    b = Bindings(size)
    verdict = "pass" if conform.check_conformance(m, p, b).passed else "fail"
    mutants[(verdict, simulate.run(m, b).verdict)] += 1

print(f"{count} generated protocols")
for key, n in sorted(outcomes.items()):
    print(f"  {key}: {n}")
print(f"{count} mutants (conformance, simulation)")
for (verdict, sim), n in sorted(mutants.items()):
    print(f"  {verdict:4} {sim:8} {n}")
if mutants[("pass", "deadlock")]:
    sys.exit("a mutant passed conformance and deadlocked")
