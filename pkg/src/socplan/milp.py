"""Export the battery-constrained shortest path as a MILP in LP file format.

Variables are ``x_i_j`` (binary, edge i->j used) and ``b_i`` (continuous,
SOC on arrival at node i). Battery propagation along an edge is the big-M
row

    b_j - (1 - a*P*t/C_m) * b_i + M * x_i_j <= M - P*t*(b*P + c)/C_m

which for the nominal model is b_j - b_i + M * x_i_j <= M - P*t/(V_nom*C_m).
"""

from __future__ import annotations

from socplan.instances import Instance
from socplan.models import soc_drop
from socplan.rcspp import ResourceModel

MAX_LINE = 200


def _num(x: float) -> str:
    return repr(float(x))


def _term(coef: float, var: str, first: bool) -> str:
    sign = "-" if coef < 0 else "+"
    mag = abs(coef)
    body = var if mag == 1.0 else f"{_num(mag)} {var}"
    if first:
        return body if sign == "+" else f"- {body}"
    return f"{sign} {body}"


def _expr(terms) -> list[str]:
    return [_term(c, v, k == 0) for k, (c, v) in enumerate(terms)]


def _wrap(head: str, tokens: list[str], tail: str = "") -> list[str]:
    """Lay ``tokens`` out after ``head`` without exceeding MAX_LINE characters."""
    lines, cur = [], head
    for tok in tokens + ([tail] if tail else []):
        if len(cur) + 1 + len(tok) > MAX_LINE and cur.strip():
            lines.append(cur)
            cur = "   " + tok
        else:
            cur = f"{cur} {tok}" if cur else tok
    lines.append(cur)
    return lines


def x_var(tail: int, head: int) -> str:
    return f"x_{tail}_{head}"


def b_var(node: int) -> str:
    return f"b_{node}"


def big_m(instance: Instance, model: ResourceModel, edge) -> float:
    """Smallest M that relaxes the edge's battery row when it is unused.

    With the row off, b_j may reach soc_max while b_i sits at 0, so M must
    cover soc_max plus the edge's drop at soc = 0 (its largest, as a <= 0).
    """
    cap = instance.battery.capacity_coulombs
    drop0 = soc_drop(edge.power, edge.time, model.inverse_voltage(0.0, edge.power), cap)
    return instance.battery.soc_max + max(drop0, 0.0)


def battery_row(instance: Instance, model: ResourceModel, edge):
    """Coefficients (on b_i, on x_ij) and right-hand side of one propagation row."""
    cap = instance.battery.capacity_coulombs
    if model.kind == "nominal":
        b_coef = -1.0
        const_inv_v = 1.0 / model.v_nom
    else:
        fit = model.fit
        b_coef = -(1.0 - fit.a * edge.power * edge.time / cap)
        const_inv_v = fit.b * edge.power + fit.c
    m = big_m(instance, model, edge)
    rhs = m - soc_drop(edge.power, edge.time, const_inv_v, cap)
    return b_coef, m, rhs


def export_milp(instance: Instance, model: ResourceModel) -> str:
    """The full MILP for ``instance`` under ``model`` as LP-format text."""
    nodes = [n[0] for n in instance.nodes]
    out_e = {v: [] for v in nodes}
    in_e = {v: [] for v in nodes}
    for e in instance.edges:
        out_e[e.tail].append(e)
        in_e[e.head].append(e)
    s, g = instance.start, instance.goal

    lines = [
        f"\\ battery-constrained shortest path, {model.kind} SOC model",
        f"\\ nodes={len(nodes)} edges={len(instance.edges)} start={s} goal={g}",
        "Minimize",
    ]
    obj = [(e.cost, x_var(e.tail, e.head)) for e in instance.edges]
    lines += _wrap(" obj:", _expr(obj) if obj else ["0 " + b_var(s)])

    lines.append("Subject To")
    start_terms = [(1.0, x_var(e.tail, e.head)) for e in out_e[s]]
    goal_terms = [(1.0, x_var(e.tail, e.head)) for e in in_e[g]]
    lines += _wrap(" start:", _expr(start_terms) or ["0 " + b_var(s)], "= 1")
    lines += _wrap(" goal:", _expr(goal_terms) or ["0 " + b_var(g)], "= 1")
    for v in nodes:
        if v in (s, g):
            continue
        terms = [(1.0, x_var(e.tail, e.head)) for e in out_e[v]]
        terms += [(-1.0, x_var(e.tail, e.head)) for e in in_e[v]]
        if terms:
            lines += _wrap(f" flow_{v}:", _expr(terms), "= 0")
    for e in instance.edges:
        b_coef, m, rhs = battery_row(instance, model, e)
        terms = [(1.0, b_var(e.head)), (b_coef, b_var(e.tail)), (m, x_var(e.tail, e.head))]
        lines += _wrap(f" soc_{e.tail}_{e.head}:", _expr(terms), f"<= {_num(rhs)}")

    lines.append("Bounds")
    smax = instance.battery.soc_max
    for v in nodes:
        if v == s:
            lines.append(f" {b_var(v)} = {_num(instance.soc0)}")
        else:
            lines.append(f" 0 <= {b_var(v)} <= {_num(smax)}")

    lines.append("Binaries")
    lines += _wrap("", [x_var(e.tail, e.head) for e in instance.edges])
    lines.append("End")
    return "\n".join(lines) + "\n"
