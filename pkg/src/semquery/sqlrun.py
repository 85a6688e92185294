"""Closed SQL subset over a single in-memory table.

Grammar: SELECT of columns and aggregates (COUNT/SUM/AVG/MIN/MAX, optional
AS), FROM the session table, WHERE with comparisons, LIKE (% wildcards),
AND/OR/NOT and parentheses, GROUP BY, ORDER BY ASC/DESC, LIMIT. Anything
else is rejected at parse time with the offending position.

Semantics pinned here and mirrored by the independent reference evaluator in
the test suite: NULLs are excluded from aggregates except COUNT(*); LIKE is
case-sensitive; comparisons involving NULL are unknown (three-valued logic,
rows kept only when the predicate is true); GROUP BY emits groups in first
appearance order unless ORDER BY is present; ORDER BY places NULLs last
ascending and first descending.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .table import Table, Value


class SqlParseError(Exception):
    def __init__(self, message: str, position: int, sql: str):
        self.position = position
        self.sql = sql
        super().__init__(f"{message} at position {position}")


class SqlExecError(Exception):
    """Column or type error while evaluating a parsed query."""


KEYWORDS = {
    "select", "from", "where", "group", "by", "order", "asc", "desc", "limit",
    "and", "or", "not", "like", "as", "count", "sum", "avg", "min", "max",
    "true", "false",
}
AGGREGATES = ("count", "sum", "avg", "min", "max")

# Aggregate names act as identifiers unless followed by an opening paren,
# so columns and aliases named count/sum/... stay usable.
_SOFT_KEYWORDS = frozenset(AGGREGATES)


@dataclass(frozen=True)
class Token:
    kind: str  # ident, keyword, string, int, real, placeholder, symbol, end
    text: str
    value: object
    pos: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<placeholder>@[A-Za-z_][A-Za-z_0-9]*@)
  | (?P<real>-?(?:\d+\.\d*|\.\d+))
  | (?P<int>-?\d+)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<symbol><>|<=|>=|[=<>(),*])
    """,
    re.VERBOSE,
)


def tokenize(sql: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    while pos < len(sql):
        if sql[pos] == "'":
            end = pos + 1
            chunks = []
            while True:
                if end >= len(sql):
                    raise SqlParseError("unterminated string literal", pos, sql)
                if sql[end] == "'":
                    if end + 1 < len(sql) and sql[end + 1] == "'":
                        chunks.append("'")
                        end += 2
                        continue
                    break
                chunks.append(sql[end])
                end += 1
            tokens.append(Token("string", sql[pos:end + 1], "".join(chunks), pos))
            pos = end + 1
            continue
        m = _TOKEN_RE.match(sql, pos)
        if not m:
            raise SqlParseError(f"unexpected character {sql[pos]!r}", pos, sql)
        kind = m.lastgroup
        text = m.group()
        if kind == "ws":
            pos = m.end()
            continue
        if kind == "ident":
            lowered = text.lower()
            if lowered in KEYWORDS:
                tokens.append(Token("keyword", text, lowered, pos))
            else:
                tokens.append(Token("ident", text, text, pos))
        elif kind == "int":
            tokens.append(Token("int", text, int(text), pos))
        elif kind == "real":
            tokens.append(Token("real", text, float(text), pos))
        elif kind == "placeholder":
            tokens.append(Token("placeholder", text, text[1:-1], pos))
        else:
            tokens.append(Token("symbol", text, text, pos))
        pos = m.end()
    tokens.append(Token("end", "", None, len(sql)))
    return tokens


# -- AST ----------------------------------------------------------------------


@dataclass(frozen=True)
class ColumnRef:
    name: str
    pos: int = 0


@dataclass(frozen=True)
class Literal:
    value: Value
    pos: int = 0


@dataclass(frozen=True)
class PlaceholderRef:
    name: str
    pos: int = 0


@dataclass(frozen=True)
class Comparison:
    op: str
    left: "Operand"
    right: "Operand"
    pos: int = 0


@dataclass(frozen=True)
class LikeExpr:
    target: "Operand"
    pattern: str
    pos: int = 0


@dataclass(frozen=True)
class NotExpr:
    inner: "BoolExpr"


@dataclass(frozen=True)
class AndExpr:
    items: tuple


@dataclass(frozen=True)
class OrExpr:
    items: tuple


Operand = ColumnRef | Literal | PlaceholderRef
BoolExpr = Comparison | LikeExpr | NotExpr | AndExpr | OrExpr


@dataclass(frozen=True)
class Aggregate:
    func: str
    arg: ColumnRef | None  # None means COUNT(*)
    pos: int = 0


@dataclass(frozen=True)
class Projection:
    expr: ColumnRef | Aggregate
    alias: str | None = None


@dataclass(frozen=True)
class OrderItem:
    column: str
    descending: bool = False
    pos: int = 0


@dataclass(frozen=True)
class SelectQuery:
    star: bool
    projections: tuple[Projection, ...]
    table_name: str
    where: BoolExpr | None
    group_by: tuple[ColumnRef, ...]
    order_by: tuple[OrderItem, ...]
    limit: int | None

    def placeholders(self) -> list[PlaceholderRef]:
        found: list[PlaceholderRef] = []

        def walk(node):
            if isinstance(node, PlaceholderRef):
                found.append(node)
            elif isinstance(node, Comparison):
                walk(node.left)
                walk(node.right)
            elif isinstance(node, NotExpr):
                walk(node.inner)
            elif isinstance(node, (AndExpr, OrExpr)):
                for item in node.items:
                    walk(item)

        if self.where is not None:
            walk(self.where)
        return found


class _Parser:
    def __init__(self, sql: str):
        self.sql = sql
        self.tokens = tokenize(sql)
        self.i = 0

    def peek(self) -> Token:
        return self.tokens[self.i]

    def next(self) -> Token:
        token = self.tokens[self.i]
        self.i += 1
        return token

    def fail(self, message: str, token: Token | None = None):
        token = token or self.peek()
        raise SqlParseError(message, token.pos, self.sql)

    def expect_keyword(self, word: str) -> Token:
        token = self.peek()
        if token.kind != "keyword" or token.value != word:
            self.fail(f"expected {word.upper()}")
        return self.next()

    def expect_symbol(self, symbol: str) -> Token:
        token = self.peek()
        if token.kind != "symbol" or token.text != symbol:
            self.fail(f"expected {symbol!r}")
        return self.next()

    def _ident_like(self, token: Token) -> bool:
        return token.kind == "ident" or (
            token.kind == "keyword" and token.value in _SOFT_KEYWORDS
        )

    def expect_ident(self) -> Token:
        token = self.peek()
        if not self._ident_like(token):
            self.fail("expected a column name")
        return self.next()

    def parse(self) -> SelectQuery:
        self.expect_keyword("select")
        star = False
        projections: list[Projection] = []
        if self.peek().kind == "symbol" and self.peek().text == "*":
            self.next()
            star = True
        else:
            projections.append(self.projection())
            while self.peek().kind == "symbol" and self.peek().text == ",":
                self.next()
                projections.append(self.projection())
        self.expect_keyword("from")
        table_name = self.expect_ident().text
        where = None
        if self.at_keyword("where"):
            self.next()
            where = self.disjunction()
        group_by: list[ColumnRef] = []
        if self.at_keyword("group"):
            self.next()
            self.expect_keyword("by")
            group_by.append(self.column())
            while self.peek().kind == "symbol" and self.peek().text == ",":
                self.next()
                group_by.append(self.column())
        order_by: list[OrderItem] = []
        if self.at_keyword("order"):
            self.next()
            self.expect_keyword("by")
            order_by.append(self.order_item())
            while self.peek().kind == "symbol" and self.peek().text == ",":
                self.next()
                order_by.append(self.order_item())
        limit = None
        if self.at_keyword("limit"):
            self.next()
            token = self.peek()
            if token.kind != "int" or token.value < 0:
                self.fail("expected a non-negative row count after LIMIT")
            limit = self.next().value
        if self.peek().kind != "end":
            self.fail("unexpected trailing input")
        return SelectQuery(
            star=star,
            projections=tuple(projections),
            table_name=table_name,
            where=where,
            group_by=tuple(group_by),
            order_by=tuple(order_by),
            limit=limit,
        )

    def at_keyword(self, word: str) -> bool:
        token = self.peek()
        return token.kind == "keyword" and token.value == word

    def projection(self) -> Projection:
        token = self.peek()
        follower = self.tokens[self.i + 1] if self.i + 1 < len(self.tokens) else None
        is_aggregate = (
            token.kind == "keyword"
            and token.value in AGGREGATES
            and follower is not None
            and follower.kind == "symbol"
            and follower.text == "("
        )
        if is_aggregate:
            self.next()
            self.expect_symbol("(")
            if token.value == "count" and self.peek().kind == "symbol" and self.peek().text == "*":
                self.next()
                arg = None
            else:
                arg = self.column()
            self.expect_symbol(")")
            expr: ColumnRef | Aggregate = Aggregate(token.value, arg, token.pos)
        else:
            expr = self.column()
        alias = None
        if self.at_keyword("as"):
            self.next()
            alias_token = self.peek()
            if alias_token.kind not in ("ident", "keyword"):
                self.fail("expected an alias name")
            alias = self.next().text
        return Projection(expr, alias)

    def column(self) -> ColumnRef:
        token = self.expect_ident()
        return ColumnRef(token.text, token.pos)

    def order_item(self) -> OrderItem:
        token = self.expect_ident()
        descending = False
        if self.at_keyword("asc"):
            self.next()
        elif self.at_keyword("desc"):
            self.next()
            descending = True
        return OrderItem(token.text, descending, token.pos)

    def disjunction(self) -> BoolExpr:
        items = [self.conjunction()]
        while self.at_keyword("or"):
            self.next()
            items.append(self.conjunction())
        return items[0] if len(items) == 1 else OrExpr(tuple(items))

    def conjunction(self) -> BoolExpr:
        items = [self.negation()]
        while self.at_keyword("and"):
            self.next()
            items.append(self.negation())
        return items[0] if len(items) == 1 else AndExpr(tuple(items))

    def negation(self) -> BoolExpr:
        if self.at_keyword("not"):
            self.next()
            return NotExpr(self.negation())
        return self.atom()

    def atom(self) -> BoolExpr:
        token = self.peek()
        if token.kind == "symbol" and token.text == "(":
            self.next()
            inner = self.disjunction()
            self.expect_symbol(")")
            return inner
        left = self.operand()
        op_token = self.peek()
        if op_token.kind == "keyword" and op_token.value == "like":
            self.next()
            pattern = self.peek()
            if pattern.kind != "string":
                self.fail("expected a string pattern after LIKE")
            self.next()
            return LikeExpr(left, pattern.value, op_token.pos)
        if op_token.kind == "symbol" and op_token.text in ("=", "<>", "<", "<=", ">", ">="):
            self.next()
            right = self.operand()
            return Comparison(op_token.text, left, right, op_token.pos)
        self.fail("expected a comparison operator or LIKE")

    def operand(self) -> Operand:
        token = self.peek()
        if self._ident_like(token):
            self.next()
            return ColumnRef(token.text, token.pos)
        if token.kind in ("int", "real", "string"):
            self.next()
            return Literal(token.value, token.pos)
        if token.kind == "keyword" and token.value in ("true", "false"):
            self.next()
            return Literal(token.value == "true", token.pos)
        if token.kind == "placeholder":
            self.next()
            return PlaceholderRef(token.value, token.pos)
        self.fail("expected a column, literal, or placeholder")


def parse_sql(sql: str) -> SelectQuery:
    return _Parser(sql).parse()


# -- evaluation ----------------------------------------------------------------


@dataclass
class QueryOutput:
    columns: list[tuple[str, str]]  # (name, kind)
    rows: list[tuple[Value, ...]]
    scalar: Value | None = None
    is_scalar: bool = False


def _kind_of(value: Value) -> str | None:
    if value is None:
        return None
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, int):
        return "integer"
    if isinstance(value, float):
        return "real"
    return "text"


_NUMERIC = ("integer", "real")


def _compare(op: str, left: Value, right: Value, pos: int) -> bool | None:
    if left is None or right is None:
        return None
    lk, rk = _kind_of(left), _kind_of(right)
    compatible = lk == rk or (lk in _NUMERIC and rk in _NUMERIC)
    if not compatible:
        raise SqlExecError(f"type mismatch in comparison at position {pos}: {lk} vs {rk}")
    if op == "=":
        return left == right
    if op == "<>":
        return left != right
    if op == "<":
        return left < right
    if op == "<=":
        return left <= right
    if op == ">":
        return left > right
    if op == ">=":
        return left >= right
    raise SqlExecError(f"unknown operator {op!r}")


def _like(value: Value, pattern: str, pos: int) -> bool | None:
    if value is None:
        return None
    if not isinstance(value, str):
        raise SqlExecError(f"LIKE needs a text operand at position {pos}")
    regex = "".join(".*" if ch == "%" else re.escape(ch) for ch in pattern)
    return re.fullmatch(regex, value, flags=re.DOTALL) is not None


class _Evaluator:
    def __init__(self, query: SelectQuery, table: Table):
        self.query = query
        self.table = table
        self.names = table.column_names
        self.kinds = {c.name: c.kind for c in table.columns}
        self.index = {name: i for i, name in enumerate(self.names)}

    def column_index(self, ref: ColumnRef) -> int:
        if ref.name not in self.index:
            raise SqlExecError(f"unknown column {ref.name!r} at position {ref.pos}")
        return self.index[ref.name]

    def operand_value(self, operand: Operand, row: tuple[Value, ...]) -> Value:
        if isinstance(operand, ColumnRef):
            return row[self.column_index(operand)]
        if isinstance(operand, PlaceholderRef):
            raise SqlExecError(
                f"unresolved placeholder @{operand.name}@ at position {operand.pos}"
            )
        return operand.value

    def predicate(self, expr: BoolExpr, row: tuple[Value, ...]) -> bool | None:
        if isinstance(expr, Comparison):
            return _compare(
                expr.op,
                self.operand_value(expr.left, row),
                self.operand_value(expr.right, row),
                expr.pos,
            )
        if isinstance(expr, LikeExpr):
            return _like(self.operand_value(expr.target, row), expr.pattern, expr.pos)
        if isinstance(expr, NotExpr):
            inner = self.predicate(expr.inner, row)
            return None if inner is None else not inner
        if isinstance(expr, AndExpr):
            saw_unknown = False
            for item in expr.items:
                value = self.predicate(item, row)
                if value is False:
                    return False
                if value is None:
                    saw_unknown = True
            return None if saw_unknown else True
        if isinstance(expr, OrExpr):
            saw_unknown = False
            for item in expr.items:
                value = self.predicate(item, row)
                if value is True:
                    return True
                if value is None:
                    saw_unknown = True
            return None if saw_unknown else False
        raise SqlExecError(f"unsupported expression {expr!r}")

    def aggregate(self, agg: Aggregate, rows: list[tuple[Value, ...]]) -> Value:
        if agg.func == "count":
            if agg.arg is None:
                return len(rows)
            idx = self.column_index(agg.arg)
            return sum(1 for row in rows if row[idx] is not None)
        idx = self.column_index(agg.arg)
        kind = self.kinds[agg.arg.name]
        values = [row[idx] for row in rows if row[idx] is not None]
        if agg.func in ("sum", "avg") and kind not in _NUMERIC:
            raise SqlExecError(
                f"{agg.func.upper()} needs a numeric column at position {agg.pos}"
            )
        if not values:
            return None
        if agg.func == "sum":
            total = sum(values)
            return total if kind == "integer" else float(total)
        if agg.func == "avg":
            return sum(values) / len(values)
        if agg.func == "min":
            return min(values)
        if agg.func == "max":
            return max(values)
        raise SqlExecError(f"unknown aggregate {agg.func!r}")

    def output_kind(self, expr: ColumnRef | Aggregate) -> str:
        if isinstance(expr, ColumnRef):
            self.column_index(expr)
            return self.kinds[expr.name]
        if expr.arg is not None:
            self.column_index(expr.arg)
        if expr.func == "count":
            return "integer"
        kind = self.kinds[expr.arg.name]
        if expr.func == "avg":
            return "real"
        if expr.func == "sum":
            return "integer" if kind == "integer" else "real"
        return kind

    def output_name(self, projection: Projection) -> str:
        if projection.alias:
            return projection.alias
        expr = projection.expr
        if isinstance(expr, ColumnRef):
            return expr.name
        arg = "*" if expr.arg is None else expr.arg.name
        return f"{expr.func}({arg})"

    def run(self) -> QueryOutput:
        query = self.query
        rows = list(self.table.rows())
        if query.where is not None:
            rows = [row for row in rows if self.predicate(query.where, row) is True]

        has_aggregate = any(isinstance(p.expr, Aggregate) for p in query.projections)

        if query.group_by:
            if query.star:
                raise SqlExecError("SELECT * cannot be combined with GROUP BY")
            grouped_names = {ref.name for ref in query.group_by}
            for ref in query.group_by:
                self.column_index(ref)
            for projection in query.projections:
                expr = projection.expr
                if isinstance(expr, ColumnRef) and expr.name not in grouped_names:
                    raise SqlExecError(
                        f"column {expr.name!r} at position {expr.pos} "
                        "must appear in GROUP BY or an aggregate"
                    )
            key_indexes = [self.column_index(ref) for ref in query.group_by]
            groups: dict[tuple, list] = {}
            for row in rows:
                key = tuple(row[i] for i in key_indexes)
                groups.setdefault(key, []).append(row)
            out_rows = []
            for key, members in groups.items():
                out_rows.append(self.project_row(members))
            out_columns = [
                (self.output_name(p), self.output_kind(p.expr)) for p in query.projections
            ]
            return self.finish(out_columns, out_rows)

        if query.star:
            if has_aggregate:
                raise SqlExecError("aggregates cannot be combined with *")
            out_columns = [(name, self.kinds[name]) for name in self.names]
            return self.finish(out_columns, rows)

        if has_aggregate:
            for projection in query.projections:
                if isinstance(projection.expr, ColumnRef):
                    raise SqlExecError(
                        f"column {projection.expr.name!r} at position {projection.expr.pos} "
                        "must appear in GROUP BY or an aggregate"
                    )
            out_columns = [
                (self.output_name(p), self.output_kind(p.expr)) for p in query.projections
            ]
            row = self.project_row(rows)
            output = self.finish(out_columns, [row])
            if len(query.projections) == 1 and not query.order_by:
                output.scalar = output.rows[0][0] if output.rows else None
                output.is_scalar = True
            return output

        out_columns = [(self.output_name(p), self.output_kind(p.expr)) for p in query.projections]
        indexes = [self.column_index(p.expr) for p in query.projections]
        out_rows = [tuple(row[i] for i in indexes) for row in rows]
        return self.finish(out_columns, out_rows)

    def project_row(self, members: list[tuple[Value, ...]]) -> tuple[Value, ...]:
        out = []
        for projection in self.query.projections:
            expr = projection.expr
            if isinstance(expr, ColumnRef):
                out.append(members[0][self.column_index(expr)] if members else None)
            else:
                out.append(self.aggregate(expr, members))
        return tuple(out)

    def finish(self, columns: list[tuple[str, str]], rows: list[tuple[Value, ...]]) -> QueryOutput:
        query = self.query
        if query.order_by:
            name_to_index = {name: i for i, (name, _) in enumerate(columns)}
            keys: list[tuple[int, bool]] = []
            for item in query.order_by:
                if item.column not in name_to_index:
                    raise SqlExecError(
                        f"ORDER BY column {item.column!r} at position {item.pos} "
                        "is not in the output"
                    )
                keys.append((name_to_index[item.column], item.descending))
            for index, descending in reversed(keys):
                rows = sorted(
                    rows,
                    key=lambda row: _sort_key(row[index], descending),
                    reverse=descending,
                )
        if query.limit is not None:
            rows = rows[: query.limit]
        return QueryOutput(columns=columns, rows=list(rows))


def _sort_key(value: Value, descending: bool):
    # NULLs last ascending, first descending: under reverse sort the null
    # flag flips with everything else, so one key shape covers both.
    del descending
    if value is None:
        return (True, 0)
    if isinstance(value, bool):
        return (False, int(value))
    return (False, value)


def run_query(sql: str | SelectQuery, table: Table, table_name: str = "table") -> QueryOutput:
    query = parse_sql(sql) if isinstance(sql, str) else sql
    if query.table_name != table_name:
        raise SqlExecError(
            f"unknown table {query.table_name!r}: queries run over {table_name!r}"
        )
    if query.placeholders():
        first = query.placeholders()[0]
        raise SqlExecError(f"unresolved placeholder @{first.name}@ at position {first.pos}")
    return _Evaluator(query, table).run()
