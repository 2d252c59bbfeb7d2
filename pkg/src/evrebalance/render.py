"""Graphviz DOT rendering of a rebalancing solution."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .graph import CHARGING, build_graph
from .instance import Instance
from .model import MilpModel

FLOW_TOL = 1e-6


def _fmt(v: float) -> str:
    return f"{v:g}"


def render_solution(instance: Instance, values: Optional[np.ndarray], model: Optional[MilpModel] = None) -> str:
    """DOT text: one rank per charge level, arcs with positive flow labelled by the flow.

    Vertices with servers are filled and carry the server count; charging
    arcs are dashed. Only arcs with positive flow are drawn, so the edge
    count equals the number of used arcs.
    """
    graph = model.graph if model is not None else build_graph(instance)
    n, H = instance.node_count, instance.levels
    nv = graph.n_vertices
    C = instance.max_servers
    counts = np.zeros(nv, dtype=np.int64)
    flows = np.zeros(graph.n_arcs)
    if values is not None:
        x = np.asarray(values, dtype=float)
        y0 = nv * nv
        counts = np.rint(x[y0: y0 + nv * C].reshape(nv, C).sum(axis=1)).astype(np.int64)
        flows = x[y0 + nv * C: y0 + nv * C + graph.n_arcs]
    lam = instance.arrival_rate
    stock = instance.idle_stock.reshape(-1)

    out = ["digraph rebalancing {", "  rankdir=LR;", '  node [shape=circle, fontsize=10];']
    for g in range(1, H + 1):
        out.append(f"  subgraph level_{g} {{")
        out.append("    rank=same;")
        for i in range(n):
            v = graph.vid(i, g)
            label = f"({i}, {g}, {_fmt(lam[i, g - 1])})"
            attrs = []
            if counts[v]:
                label += f"\\nservers={counts[v]}"
                attrs += ["style=filled", 'fillcolor="#f4a582"']
            if stock[v]:
                label += f"\\nidle={stock[v]}"
                attrs.append("penwidth=2")
            attrs.insert(0, f'label="{label}"')
            out.append(f"    v{v} [{', '.join(attrs)}];")
        out.append("  }")
    for a in np.nonzero(flows > FLOW_TOL)[0]:
        style = ", style=dashed" if graph.kind[a] == CHARGING else ""
        out.append(f'  v{graph.tail[a]} -> v{graph.head[a]} [label="{_fmt(round(flows[a], 6))}", color=red{style}];')
    out.append("}")
    return "\n".join(out) + "\n"
