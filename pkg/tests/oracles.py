"""Independent oracles for property tests.

Nothing in here reuses engine evaluation logic: the closure oracle works by
brute-force graph walking and exhaustive topological-order enumeration, and
the SQL reference evaluator interprets the parsed query with its own naive
row-scan semantics.
"""

from __future__ import annotations

import random
from fractions import Fraction

from semquery.sqlrun import (
    Aggregate,
    AndExpr,
    ColumnRef,
    Comparison,
    LikeExpr,
    Literal,
    NotExpr,
    OrExpr,
    OrderItem,
    Projection,
    SelectQuery,
)

# --------------------------------------------------------------------------
# dependency-closure oracle
# --------------------------------------------------------------------------


def closure_by_walk(requested: list[str], backward: dict[str, set[str]]) -> set[str]:
    seen: set[str] = set()
    frontier = list(requested)
    while frontier:
        node = frontier.pop()
        if node in seen:
            continue
        seen.add(node)
        frontier.extend(backward.get(node, ()))
    return seen


def all_topological_orders(nodes: set[str], backward: dict[str, set[str]]) -> list[tuple[str, ...]]:
    """Every provider-before-consumer ordering of the node set, by backtracking."""
    orders: list[tuple[str, ...]] = []
    deps = {n: {d for d in backward.get(n, ()) if d in nodes} for n in nodes}

    def extend(prefix: list[str], remaining: set[str]):
        if not remaining:
            orders.append(tuple(prefix))
            return
        for node in sorted(remaining):
            if deps[node] <= set(prefix):
                prefix.append(node)
                extend(prefix, remaining - {node})
                prefix.pop()

    extend([], set(nodes))
    return orders


def random_dag(rng: random.Random, size: int) -> dict[str, set[str]]:
    """Backward-dependency map over ids f0..f{size-1}; edges only old -> new."""
    ids = [f"f{i}" for i in range(size)]
    backward: dict[str, set[str]] = {fid: set() for fid in ids}
    for i, fid in enumerate(ids):
        for j in range(i):
            if rng.random() < 0.35:
                backward[fid].add(ids[j])
    return backward


# --------------------------------------------------------------------------
# reference SQL evaluator (naive row scan, written against the dialect spec)
# --------------------------------------------------------------------------


class ReferenceError_(Exception):
    pass


def _ref_like(value, pattern):
    if value is None:
        return None
    if not isinstance(value, str):
        raise ReferenceError_("LIKE on non-text")
    # straightforward backtracking matcher for % wildcards
    def match(v: str, p: str) -> bool:
        if not p:
            return not v
        if p[0] == "%":
            return any(match(v[i:], p[1:]) for i in range(len(v) + 1))
        return bool(v) and v[0] == p[0] and match(v[1:], p[1:])

    return match(value, pattern)


def _ref_compare(op, left, right):
    if left is None or right is None:
        return None

    def family(v):
        if isinstance(v, bool):
            return "bool"
        if isinstance(v, (int, float)):
            return "num"
        return "text"

    if family(left) != family(right):
        raise ReferenceError_("type mismatch")
    table = {
        "=": lambda a, b: a == b,
        "<>": lambda a, b: a != b,
        "<": lambda a, b: a < b,
        "<=": lambda a, b: a <= b,
        ">": lambda a, b: a > b,
        ">=": lambda a, b: a >= b,
    }
    return table[op](left, right)


def _ref_operand(operand, row, index):
    if isinstance(operand, ColumnRef):
        if operand.name not in index:
            raise ReferenceError_(f"unknown column {operand.name}")
        return row[index[operand.name]]
    if isinstance(operand, Literal):
        return operand.value
    raise ReferenceError_("placeholders are not executable")


def _ref_predicate(expr, row, index):
    if isinstance(expr, Comparison):
        return _ref_compare(
            expr.op, _ref_operand(expr.left, row, index), _ref_operand(expr.right, row, index)
        )
    if isinstance(expr, LikeExpr):
        return _ref_like(_ref_operand(expr.target, row, index), expr.pattern)
    if isinstance(expr, NotExpr):
        inner = _ref_predicate(expr.inner, row, index)
        return None if inner is None else not inner
    if isinstance(expr, AndExpr):
        values = [_ref_predicate(item, row, index) for item in expr.items]
        if any(v is False for v in values):
            return False
        if any(v is None for v in values):
            return None
        return True
    if isinstance(expr, OrExpr):
        values = [_ref_predicate(item, row, index) for item in expr.items]
        if any(v is True for v in values):
            return True
        if any(v is None for v in values):
            return None
        return False
    raise ReferenceError_(f"unsupported {expr!r}")


def _ref_aggregate(agg: Aggregate, rows, index, kinds):
    if agg.func == "count":
        if agg.arg is None:
            return len(rows)
        if agg.arg.name not in index:
            raise ReferenceError_(f"unknown column {agg.arg.name}")
        return len([r for r in rows if r[index[agg.arg.name]] is not None])
    if agg.arg.name not in index:
        raise ReferenceError_(f"unknown column {agg.arg.name}")
    kind = kinds[agg.arg.name]
    values = [r[index[agg.arg.name]] for r in rows if r[index[agg.arg.name]] is not None]
    if agg.func in ("sum", "avg") and kind not in ("integer", "real"):
        raise ReferenceError_("numeric aggregate on non-numeric column")
    if not values:
        return None
    if agg.func == "sum":
        total = 0
        for v in values:
            total = total + v
        return total if kind == "integer" else float(total)
    if agg.func == "avg":
        # exact rational mean, converted at the end; matches float division
        # closely enough for comparison via approx-equality
        return float(Fraction(0, 1) + sum(Fraction(v) for v in values) / len(values))
    if agg.func == "min":
        best = values[0]
        for v in values[1:]:
            if v < best:
                best = v
        return best
    best = values[0]
    for v in values[1:]:
        if v > best:
            best = v
    return best


def reference_eval(query: SelectQuery, table) -> tuple[list[str], list[tuple]]:
    """Naive evaluation of a parsed query over a semquery Table.

    Returns (output column names, rows). Raises ReferenceError_ on semantic
    errors (unknown columns, type mismatches, invalid projections).
    """
    names = table.column_names
    index = {n: i for i, n in enumerate(names)}
    kinds = {c.name: c.kind for c in table.columns}
    rows = list(table.rows())

    if query.where is not None:
        rows = [r for r in rows if _ref_predicate(query.where, r, index) is True]

    def out_name(projection: Projection) -> str:
        if projection.alias:
            return projection.alias
        if isinstance(projection.expr, ColumnRef):
            return projection.expr.name
        arg = "*" if projection.expr.arg is None else projection.expr.arg.name
        return f"{projection.expr.func}({arg})"

    if query.group_by:
        if query.star:
            raise ReferenceError_("* with GROUP BY")
        for ref in query.group_by:
            if ref.name not in index:
                raise ReferenceError_(f"unknown column {ref.name}")
        grouped = {ref.name for ref in query.group_by}
        for projection in query.projections:
            if isinstance(projection.expr, ColumnRef) and projection.expr.name not in grouped:
                raise ReferenceError_("bare column outside GROUP BY")
        order: list[tuple] = []
        members: dict[tuple, list] = {}
        for row in rows:
            key = tuple(row[index[ref.name]] for ref in query.group_by)
            if key not in members:
                members[key] = []
                order.append(key)
            members[key].append(row)
        out_rows = []
        for key in order:
            group = members[key]
            out = []
            for projection in query.projections:
                if isinstance(projection.expr, ColumnRef):
                    out.append(group[0][index[projection.expr.name]])
                else:
                    out.append(_ref_aggregate(projection.expr, group, index, kinds))
            out_rows.append(tuple(out))
        out_names = [out_name(p) for p in query.projections]
    elif query.star:
        out_names = list(names)
        out_rows = [tuple(r) for r in rows]
    else:
        has_agg = any(isinstance(p.expr, Aggregate) for p in query.projections)
        if has_agg:
            for projection in query.projections:
                if isinstance(projection.expr, ColumnRef):
                    raise ReferenceError_("bare column next to aggregate")
            out_rows = [
                tuple(
                    _ref_aggregate(p.expr, rows, index, kinds) for p in query.projections
                )
            ]
        else:
            for projection in query.projections:
                if projection.expr.name not in index:
                    raise ReferenceError_(f"unknown column {projection.expr.name}")
            out_rows = [
                tuple(r[index[p.expr.name]] for p in query.projections) for r in rows
            ]
        out_names = [out_name(p) for p in query.projections]

    if query.order_by:
        position = {n: i for i, n in enumerate(out_names)}
        for item in query.order_by:
            if item.column not in position:
                raise ReferenceError_(f"ORDER BY {item.column} not in output")
        for item in reversed(query.order_by):
            i = position[item.column]

            def key(row, i=i):
                v = row[i]
                if v is None:
                    return (True, 0)
                if isinstance(v, bool):
                    return (False, int(v))
                return (False, v)

            out_rows = sorted(out_rows, key=key, reverse=item.descending)

    if query.limit is not None:
        out_rows = out_rows[: query.limit]
    return out_names, out_rows


# --------------------------------------------------------------------------
# randomized tables and dialect queries
# --------------------------------------------------------------------------

_WORDS = ["rain", "sun", "storm", "wind", "calm", "", "Rain", "drizzle%", "a'b"]


def random_table(rng: random.Random):
    from semquery.table import Provenance, empty_table

    n_rows = rng.randint(0, 50)
    n_cols = rng.randint(1, 4)
    table = empty_table()
    kinds = [rng.choice(["text", "integer", "real", "boolean"]) for _ in range(n_cols)]
    for i, kind in enumerate(kinds):
        cells = []
        for _ in range(n_rows):
            if rng.random() < 0.15:
                cells.append(None)
            elif kind == "text":
                cells.append(rng.choice(_WORDS))
            elif kind == "integer":
                cells.append(rng.randint(-5, 5))
            elif kind == "real":
                cells.append(round(rng.uniform(-2.0, 2.0), 3))
            else:
                cells.append(rng.random() < 0.5)
        table = table.add_column(
            f"col{i}", f"column {i} holding {kind} data", kind,
            Provenance.user_source("random", f"col{i}"), cells,
        )
    return table


def _random_operand(rng, table, column):
    kind = column.kind
    if rng.random() < 0.5:
        other = [c for c in table.columns if c.kind == kind]
        if other:
            return ColumnRef(rng.choice(other).name)
    if kind == "text":
        return Literal(rng.choice(_WORDS))
    if kind == "integer":
        return Literal(rng.randint(-5, 5))
    if kind == "real":
        return Literal(round(rng.uniform(-2.0, 2.0), 3))
    return Literal(rng.random() < 0.5)


def _random_predicate(rng, table, depth=0):
    roll = rng.random()
    if depth < 2 and roll < 0.2:
        n = rng.randint(2, 3)
        items = tuple(_random_predicate(rng, table, depth + 1) for _ in range(n))
        return AndExpr(items) if rng.random() < 0.5 else OrExpr(items)
    if depth < 2 and roll < 0.3:
        return NotExpr(_random_predicate(rng, table, depth + 1))
    column = rng.choice(table.columns)
    if column.kind == "text" and rng.random() < 0.4:
        word = rng.choice(["rain", "a", "", "dr%", "%ain", "%a%", "a'b"])
        return LikeExpr(ColumnRef(column.name), word)
    op = rng.choice(["=", "<>", "<", "<=", ">", ">="])
    left = ColumnRef(column.name)
    right = _random_operand(rng, table, column)
    return Comparison(op, left, right)


def random_query(rng: random.Random, table) -> SelectQuery:
    where = _random_predicate(rng, table) if rng.random() < 0.8 else None
    order_by: tuple[OrderItem, ...] = ()
    limit = rng.randint(0, 10) if rng.random() < 0.3 else None

    shape = rng.random()
    if shape < 0.3:
        # group-by with aggregates
        n_keys = rng.randint(1, min(2, len(table.columns)))
        keys = rng.sample(list(table.columns), n_keys)
        projections = [Projection(ColumnRef(c.name)) for c in keys]
        projections.append(Projection(Aggregate("count", None), "count"))
        numeric = [c for c in table.columns if c.kind in ("integer", "real")]
        if numeric and rng.random() < 0.7:
            target = rng.choice(numeric)
            func = rng.choice(["sum", "avg", "min", "max"])
            projections.append(Projection(Aggregate(func, ColumnRef(target.name)), f"{func}_v"))
        any_col = rng.choice(table.columns)
        projections.append(
            Projection(Aggregate("count", ColumnRef(any_col.name)), "nonnull")
        )
        if rng.random() < 0.5:
            order_by = tuple(
                OrderItem(rng.choice([p.alias or p.expr.name for p in projections[:n_keys + 1]]),
                          rng.random() < 0.5)
                for _ in range(rng.randint(1, 2))
            )
        return SelectQuery(
            star=False,
            projections=tuple(projections),
            table_name="table",
            where=where,
            group_by=tuple(ColumnRef(c.name) for c in keys),
            order_by=order_by,
            limit=limit,
        )
    if shape < 0.55:
        # whole-table aggregates
        projections = [Projection(Aggregate("count", None), "n")]
        numeric = [c for c in table.columns if c.kind in ("integer", "real")]
        if numeric:
            target = rng.choice(numeric)
            for func in rng.sample(["sum", "avg", "min", "max"], rng.randint(1, 2)):
                projections.append(
                    Projection(Aggregate(func, ColumnRef(target.name)), f"{func}_v")
                )
        comparable = rng.choice(table.columns)
        if rng.random() < 0.5 and comparable.kind != "boolean":
            projections.append(
                Projection(Aggregate(rng.choice(["min", "max"]), ColumnRef(comparable.name)), "mm")
            )
        return SelectQuery(
            star=False,
            projections=tuple(projections),
            table_name="table",
            where=where,
            group_by=(),
            order_by=(),
            limit=limit,
        )
    if shape < 0.8:
        # plain projection
        n = rng.randint(1, len(table.columns))
        chosen = rng.sample(list(table.columns), n)
        projections = tuple(Projection(ColumnRef(c.name)) for c in chosen)
        if rng.random() < 0.5:
            order_by = tuple(
                OrderItem(rng.choice(chosen).name, rng.random() < 0.5)
                for _ in range(rng.randint(1, 2))
            )
        return SelectQuery(
            star=False,
            projections=projections,
            table_name="table",
            where=where,
            group_by=(),
            order_by=order_by,
            limit=limit,
        )
    # star
    if rng.random() < 0.5:
        order_by = (OrderItem(rng.choice(table.columns).name, rng.random() < 0.5),)
    return SelectQuery(
        star=True,
        projections=(),
        table_name="table",
        where=where,
        group_by=(),
        order_by=order_by,
        limit=limit,
    )


def render_sql(query: SelectQuery) -> str:
    """Turn a generated AST back into dialect text (exercises the parser)."""

    def operand(o):
        if isinstance(o, ColumnRef):
            return o.name
        if isinstance(o, Literal):
            v = o.value
            if v is None:
                raise ReferenceError_("no NULL literal in the dialect")
            if isinstance(v, bool):
                return "TRUE" if v else "FALSE"
            if isinstance(v, str):
                return "'" + v.replace("'", "''") + "'"
            return repr(v)
        raise ReferenceError_(f"unsupported operand {o!r}")

    def predicate(e):
        if isinstance(e, Comparison):
            return f"{operand(e.left)} {e.op} {operand(e.right)}"
        if isinstance(e, LikeExpr):
            escaped = e.pattern.replace("'", "''")
            return f"{operand(e.target)} LIKE '{escaped}'"
        if isinstance(e, NotExpr):
            return f"NOT ({predicate(e.inner)})"
        if isinstance(e, AndExpr):
            return "(" + " AND ".join(predicate(i) for i in e.items) + ")"
        if isinstance(e, OrExpr):
            return "(" + " OR ".join(predicate(i) for i in e.items) + ")"
        raise ReferenceError_(f"unsupported predicate {e!r}")

    if query.star:
        head = "SELECT *"
    else:
        parts = []
        for p in query.projections:
            if isinstance(p.expr, ColumnRef):
                text = p.expr.name
            else:
                arg = "*" if p.expr.arg is None else p.expr.arg.name
                text = f"{p.expr.func.upper()}({arg})"
            if p.alias:
                text += f" AS {p.alias}"
            parts.append(text)
        head = "SELECT " + ", ".join(parts)
    sql = f"{head} FROM table"
    if query.where is not None:
        sql += " WHERE " + predicate(query.where)
    if query.group_by:
        sql += " GROUP BY " + ", ".join(c.name for c in query.group_by)
    if query.order_by:
        sql += " ORDER BY " + ", ".join(
            f"{o.column} {'DESC' if o.descending else 'ASC'}" for o in query.order_by
        )
    if query.limit is not None:
        sql += f" LIMIT {query.limit}"
    return sql
