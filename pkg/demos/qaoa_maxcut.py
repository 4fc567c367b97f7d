"""Single-layer QAOA on a user-supplied six-node graph and a short Q-score sweep."""
from deskqc.maxcut import Graph, brute_force_maxcut, optimize_qaoa, qscore_run

edges = "1 2\n1 3\n2 3\n4 5\n4 6\n5 6\n1 4\n2 5\n3 6\n"
g = Graph.from_edge_list(edges)
best, argmax = brute_force_maxcut(g)
res = optimize_qaoa(g, 2048, rng_seed=11)
print(f"max cut {best} at {argmax[:3]}...; QAOA gamma={res.gamma:.3f} beta={res.beta:.3f} "
      f"mean cut {res.expected_cut:.3f} (ratio {res.expected_cut / best:.3f})")

rep = qscore_run((3, 4, 5), 20, 1024, rng_seed=5)
for n in rep.sizes:
    print(f"n={n}: beta={rep.beta[n]:.3f} ± {rep.beta_stderr[n]:.3f}  passed={rep.passed[n]}")
