"""Recursive-descent parser and program validation.

The grammar lives in GRAMMAR.md. Every item is self-delimiting, so newlines
never reach the parser and ``;`` tokens are skipped as optional separators
between items and between statements inside a block.

Parsing happens in two passes: a purely syntactic pass builds the tree, then a
resolution pass checks every name against the declaration tables and rewrites
dotted references that do not name a relation (``COUNTER.count``) into scope
references.
"""

from __future__ import annotations

from . import ast
from .errors import ParseError, SemanticError
from .lexer import Token, TokenKind, tokenize

_EOF = Token(TokenKind.EOF, "<eof>", 0, 0)

_SIMPLE_STATEMENTS = {
    "START": ast.StartTimer,
    "STOP": ast.StopTimer,
    "ACTIVATE": ast.Activate,
    "DEACTIVATE": ast.Deactivate,
    "CHECK": ast.Check,
}


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    def current(self) -> Token:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else _EOF

    def advance(self) -> Token:
        token = self.current()
        if token.kind is not TokenKind.EOF:
            self.pos += 1
        return token

    def at(self, kind: TokenKind, value: object = None) -> bool:
        token = self.current()
        return token.kind is kind and (value is None or token.value == value)

    def expect(self, kind: TokenKind, value: object = None, what: str | None = None) -> Token:
        token = self.current()
        if not self.at(kind, value):
            wanted = what or (repr(value) if value is not None else kind.value)
            raise ParseError(
                f"expected {wanted}, got {token.value!r}", token.line, token.column
            )
        return self.advance()

    def skip_separators(self) -> None:
        while self.at(TokenKind.PUNCT, ";"):
            self.advance()

    # -- program structure -------------------------------------------------

    def parse_program(self) -> ast.Program:
        relations: list[ast.RelationDecl] = []
        triggers: list[ast.TriggerDecl] = []
        endpoints: list[ast.EndpointDecl] = []
        timers: list[ast.TimerDecl] = []
        rules: list[ast.RuleDecl] = []
        modules: list[ast.ModuleDecl] = []
        mappings: list[ast.MapDecl] = []
        statements: list[ast.Statement] = []

        while True:
            self.skip_separators()
            token = self.current()
            if token.kind is TokenKind.EOF:
                break
            if token.kind is TokenKind.KEYWORD:
                word = token.value
                if word == "RELATION":
                    relations.append(self.parse_relation())
                elif word == "TRIGGER":
                    triggers.append(self.parse_trigger())
                elif word == "ENDPOINT":
                    endpoints.append(self.parse_endpoint())
                elif word == "TIMER":
                    timers.append(self.parse_timer())
                elif word == "RULE":
                    rules.append(self.parse_rule())
                elif word == "MODULE":
                    modules.append(self.parse_module())
                elif word == "MAP":
                    mappings.append(self.parse_map())
                else:
                    statements.append(self.parse_statement())
            elif token.kind is TokenKind.IDENT:
                statements.append(self.parse_statement())
            else:
                raise ParseError(
                    f"expected a declaration or statement, got {token.value!r}",
                    token.line,
                    token.column,
                )

        return ast.Program(
            relations=tuple(relations),
            triggers=tuple(triggers),
            endpoints=tuple(endpoints),
            timers=tuple(timers),
            rules=tuple(rules),
            modules=tuple(modules),
            mappings=tuple(mappings),
            top_level_statements=tuple(statements),
        )

    def parse_ident(self, what: str) -> str:
        token = self.expect(TokenKind.IDENT, what=what)
        return token.value  # type: ignore[return-value]

    def parse_ident_list(self) -> tuple[str, ...]:
        names = [self.parse_ident("an identifier")]
        while self.at(TokenKind.PUNCT, ","):
            self.advance()
            names.append(self.parse_ident("an identifier"))
        return tuple(names)

    def parse_relation(self) -> ast.RelationDecl:
        start = self.advance()
        name = self.parse_ident("a relation name")
        self.expect(TokenKind.PUNCT, "(")
        fields = self.parse_ident_list()
        self.expect(TokenKind.PUNCT, ")")
        return ast.RelationDecl(name, fields, pos=ast.Pos(start.line, start.column))

    def parse_trigger(self) -> ast.TriggerDecl:
        start = self.advance()
        self.expect(TokenKind.PUNCT, "(")
        relation = self.parse_ident("a relation name")
        self.expect(TokenKind.PUNCT, ")")
        body = self.parse_block()
        return ast.TriggerDecl(relation, body, pos=ast.Pos(start.line, start.column))

    def parse_endpoint(self) -> ast.EndpointDecl:
        start = self.advance()
        name = self.parse_ident("an endpoint name")
        self.expect(TokenKind.PUNCT, "(")
        params: tuple[str, ...] = ()
        if not self.at(TokenKind.PUNCT, ")"):
            params = self.parse_ident_list()
        self.expect(TokenKind.PUNCT, ")")
        body = self.parse_block()
        return ast.EndpointDecl(name, params, body, pos=ast.Pos(start.line, start.column))

    def parse_timer(self) -> ast.TimerDecl:
        start = self.advance()
        name = self.parse_ident("a timer name")
        self.expect(TokenKind.PUNCT, "(")
        interval_token = self.expect(TokenKind.NUMBER, what="an interval in milliseconds")
        self.expect(TokenKind.PUNCT, ")")
        interval = interval_token.value
        if not float(interval).is_integer() or interval < 1:
            raise SemanticError(
                "timer interval must be a positive integer of milliseconds",
                interval_token.line,
                interval_token.column,
            )
        body = self.parse_block()
        return ast.TimerDecl(name, int(interval), body, pos=ast.Pos(start.line, start.column))

    def parse_rule(self) -> ast.RuleDecl:
        start = self.advance()
        name = self.parse_ident("a rule name")
        condition = self.parse_expression()
        body = self.parse_block()
        return ast.RuleDecl(name, condition, body, pos=ast.Pos(start.line, start.column))

    def parse_module(self) -> ast.ModuleDecl:
        start = self.advance()
        name = self.parse_ident("a module name")
        self.expect(TokenKind.PUNCT, "(")
        outputs: tuple[str, ...] = ()
        if not self.at(TokenKind.PUNCT, ")"):
            outputs = self.parse_ident_list()
        self.expect(TokenKind.PUNCT, ")")
        return ast.ModuleDecl(name, outputs, pos=ast.Pos(start.line, start.column))

    def parse_map(self) -> ast.MapDecl:
        start = self.advance()
        kind_token = self.current()
        if self.at(TokenKind.KEYWORD, "RELATION"):
            kind = "relation"
        elif self.at(TokenKind.KEYWORD, "MODULE"):
            kind = "module"
        else:
            raise ParseError(
                "expected RELATION or MODULE after MAP", kind_token.line, kind_token.column
            )
        self.advance()
        name = self.parse_ident("a declaration name")
        self.expect(TokenKind.PUNCT, ":")
        target_token = self.current()
        if target_token.kind in (TokenKind.URI, TokenKind.STRING):
            self.advance()
            target = target_token.value
        else:
            raise ParseError(
                "expected a mapping target", target_token.line, target_token.column
            )
        if not target:
            raise ParseError("mapping target is empty", target_token.line, target_token.column)
        return ast.MapDecl(kind, name, target, pos=ast.Pos(start.line, start.column))

    # -- statements ----------------------------------------------------------

    def parse_block(self) -> ast.Block:
        self.expect(TokenKind.PUNCT, "{")
        statements: list[ast.Statement] = []
        while True:
            self.skip_separators()
            if self.at(TokenKind.PUNCT, "}"):
                self.advance()
                return tuple(statements)
            if self.current().kind is TokenKind.EOF:
                token = self.current()
                raise ParseError("unterminated block, expected '}'", token.line, token.column)
            statements.append(self.parse_statement())

    def parse_statement(self) -> ast.Statement:
        token = self.current()
        pos = ast.Pos(token.line, token.column)
        if token.kind is TokenKind.IDENT:
            name = self.advance().value
            self.expect(TokenKind.PUNCT, "(")
            args = self.parse_args()
            self.expect(TokenKind.PUNCT, ")")
            return ast.Insert(name, args, pos=pos)  # type: ignore[arg-type]
        if token.kind is TokenKind.KEYWORD and token.value in _SIMPLE_STATEMENTS:
            ctor = _SIMPLE_STATEMENTS[token.value]  # type: ignore[index]
            self.advance()
            self.expect(TokenKind.PUNCT, "(")
            target = self.parse_ident("a name")
            self.expect(TokenKind.PUNCT, ")")
            return ctor(target, pos=pos)
        if token.kind is TokenKind.KEYWORD and token.value in ("CALL", "ACALL"):
            word = self.advance().value
            name = self.parse_ident("a module name")
            self.expect(TokenKind.PUNCT, "(")
            args = self.parse_args()
            self.expect(TokenKind.PUNCT, ")")
            ctor = ast.CallModule if word == "CALL" else ast.AcallModule
            return ctor(name, args, pos=pos)
        raise ParseError(f"expected a statement, got {token.value!r}", token.line, token.column)

    def parse_args(self) -> tuple[ast.Expression, ...]:
        if self.at(TokenKind.PUNCT, ")"):
            return ()
        args = [self.parse_arg()]
        while self.at(TokenKind.PUNCT, ","):
            self.advance()
            args.append(self.parse_arg())
        return tuple(args)

    def parse_arg(self) -> ast.Expression:
        token = self.current()
        if token.kind is TokenKind.NUMBER or token.kind is TokenKind.STRING:
            self.advance()
            return ast.Literal(token.value)  # type: ignore[arg-type]
        if token.kind is TokenKind.IDENT:
            return self.parse_name_ref()
        raise ParseError(
            f"expected a literal or name argument, got {token.value!r}",
            token.line,
            token.column,
        )

    def parse_name_ref(self) -> ast.Expression:
        """``NAME``, ``NAME.FIELD`` or ``NAME.FIELD[-k]``.

        Dotted forms parse as field references; program resolution later turns
        the ones whose base is not a relation into scope references.
        """
        base = self.parse_ident("a name")
        if not self.at(TokenKind.PUNCT, "."):
            return ast.ScopeRef(base)
        self.advance()
        field = self.parse_ident("a field name")
        offset = 0
        if self.at(TokenKind.PUNCT, "["):
            bracket = self.advance()
            number_token = self.expect(TokenKind.NUMBER, what="a negative offset")
            self.expect(TokenKind.PUNCT, "]")
            value = number_token.value
            if not float(value).is_integer() or value > -1:
                raise ParseError(
                    "history offset must be a negative integer like [-1]",
                    bracket.line,
                    bracket.column,
                )
            offset = int(value)
        return ast.FieldRef(base, field, offset)

    # -- expressions ---------------------------------------------------------

    def parse_expression(self) -> ast.Expression:
        return self.parse_or()

    def parse_or(self) -> ast.Expression:
        left = self.parse_and()
        while self.at(TokenKind.KEYWORD, "OR"):
            self.advance()
            left = ast.Binary("OR", left, self.parse_and())
        return left

    def parse_and(self) -> ast.Expression:
        left = self.parse_not()
        while self.at(TokenKind.KEYWORD, "AND"):
            self.advance()
            left = ast.Binary("AND", left, self.parse_not())
        return left

    def parse_not(self) -> ast.Expression:
        if self.at(TokenKind.KEYWORD, "NOT"):
            self.advance()
            return ast.Unary("NOT", self.parse_not())
        return self.parse_comparison()

    def parse_comparison(self) -> ast.Expression:
        left = self.parse_additive()
        token = self.current()
        if token.kind is TokenKind.OP and token.value in ast.COMPARISON_OPS:
            self.advance()
            right = self.parse_additive()
            after = self.current()
            if after.kind is TokenKind.OP and after.value in ast.COMPARISON_OPS:
                raise ParseError(
                    "comparisons are non-associative; parenthesize to chain them",
                    after.line,
                    after.column,
                )
            return ast.Binary(token.value, left, right)  # type: ignore[arg-type]
        return left

    def parse_additive(self) -> ast.Expression:
        left = self.parse_multiplicative()
        while self.current().kind is TokenKind.OP and self.current().value in ("+", "-"):
            op = self.advance().value
            left = ast.Binary(op, left, self.parse_multiplicative())  # type: ignore[arg-type]
        return left

    def parse_multiplicative(self) -> ast.Expression:
        left = self.parse_unary()
        while self.current().kind is TokenKind.OP and self.current().value in ("*", "/"):
            op = self.advance().value
            left = ast.Binary(op, left, self.parse_unary())  # type: ignore[arg-type]
        return left

    def parse_unary(self) -> ast.Expression:
        if self.at(TokenKind.OP, "-"):
            self.advance()
            return ast.Unary("-", self.parse_unary())
        return self.parse_primary()

    def parse_primary(self) -> ast.Expression:
        token = self.current()
        if token.kind is TokenKind.NUMBER or token.kind is TokenKind.STRING:
            self.advance()
            return ast.Literal(token.value)  # type: ignore[arg-type]
        if token.kind is TokenKind.IDENT:
            return self.parse_name_ref()
        if self.at(TokenKind.PUNCT, "("):
            self.advance()
            inner = self.parse_expression()
            self.expect(TokenKind.PUNCT, ")")
            return inner
        raise ParseError(f"expected an expression, got {token.value!r}", token.line, token.column)


# -- resolution & validation ----------------------------------------------------


class _Resolver:
    """Checks the parsed tree against declaration tables and rewrites names."""

    def __init__(self, program: ast.Program):
        self.program = program
        self.relations = {d.name: d for d in program.relations}
        self.timers = {d.name for d in program.timers}
        self.rules = {d.name for d in program.rules}
        self.modules = {d.name: d for d in program.modules}

    def fail(self, message: str, pos: ast.Pos) -> None:
        raise SemanticError(message, pos.line, pos.column)

    def run(self) -> ast.Program:
        p = self.program
        self.check_unique((d.name for d in p.relations), "relation", p.relations)
        self.check_unique((d.name for d in p.endpoints), "endpoint", p.endpoints)
        self.check_unique((d.name for d in p.timers), "timer", p.timers)
        self.check_unique((d.name for d in p.rules), "rule", p.rules)
        self.check_unique((d.name for d in p.modules), "module", p.modules)
        self.check_unique(((d.kind, d.name) for d in p.mappings), "mapping", p.mappings)

        for relation in p.relations:
            self.check_unique(relation.fields, "field", [relation] * len(relation.fields))
            if "T" in relation.fields:
                self.fail(
                    f"relation {relation.name}: field name T is reserved for the timestamp",
                    relation.pos,
                )

        for module in p.modules:
            self.check_unique(module.outputs, "output", [module] * len(module.outputs))
            if module.name in self.relations:
                self.fail(
                    f"module {module.name} shadows a relation of the same name", module.pos
                )

        seen_trigger_relations: set[str] = set()
        triggers = []
        for trigger in p.triggers:
            if trigger.relation not in self.relations:
                self.fail(f"trigger references unknown relation {trigger.relation}", trigger.pos)
            if trigger.relation in seen_trigger_relations:
                self.fail(f"relation {trigger.relation} already has a trigger", trigger.pos)
            seen_trigger_relations.add(trigger.relation)
            triggers.append(
                ast.TriggerDecl(
                    trigger.relation, self.resolve_block(trigger.body, trigger.pos), trigger.pos
                )
            )

        endpoints = []
        for endpoint in p.endpoints:
            self.check_unique(endpoint.params, "parameter", [endpoint] * len(endpoint.params))
            for param in endpoint.params:
                if param in self.relations:
                    self.fail(
                        f"endpoint {endpoint.name}: parameter {param} shadows a relation",
                        endpoint.pos,
                    )
            endpoints.append(
                ast.EndpointDecl(
                    endpoint.name,
                    endpoint.params,
                    self.resolve_block(endpoint.body, endpoint.pos),
                    endpoint.pos,
                )
            )

        timers = [
            ast.TimerDecl(t.name, t.interval_ms, self.resolve_block(t.body, t.pos), t.pos)
            for t in p.timers
        ]

        rules = []
        for rule in p.rules:
            condition = self.resolve_condition(rule.condition, rule)
            rules.append(
                ast.RuleDecl(rule.name, condition, self.resolve_block(rule.body, rule.pos), rule.pos)
            )

        for mapping in p.mappings:
            table = self.relations if mapping.kind == "relation" else self.modules
            if mapping.name not in table:
                self.fail(
                    f"mapping references unknown {mapping.kind} {mapping.name}", mapping.pos
                )

        statements = tuple(self.resolve_statement(s) for s in p.top_level_statements)

        return ast.Program(
            relations=p.relations,
            triggers=tuple(triggers),
            endpoints=tuple(endpoints),
            timers=tuple(timers),
            rules=tuple(rules),
            modules=p.modules,
            mappings=p.mappings,
            top_level_statements=statements,
        )

    def check_unique(self, names, kind: str, decls) -> None:
        seen: set = set()
        for name, decl in zip(names, decls):
            if name in seen:
                label = name if isinstance(name, str) else f"{name[0].upper()} {name[1]}"
                self.fail(f"duplicate {kind} {label}", decl.pos)
            seen.add(name)

    # expressions in statement-argument position may reach into scope
    def resolve_arg(self, expr: ast.Expression, pos: ast.Pos) -> ast.Expression:
        if isinstance(expr, ast.Literal) or isinstance(expr, ast.ScopeRef):
            return expr
        if isinstance(expr, ast.FieldRef):
            if expr.relation in self.relations:
                self.check_field(expr, pos)
                return expr
            if expr.offset == 0:
                return ast.ScopeRef(f"{expr.relation}.{expr.field}")
            self.fail(f"unknown relation {expr.relation}", pos)
        self.fail("statement arguments must be literals or names", pos)
        raise AssertionError("unreachable")

    def check_field(self, ref: ast.FieldRef, pos: ast.Pos) -> None:
        decl = self.relations[ref.relation]
        if ref.field != "T" and ref.field not in decl.fields:
            self.fail(f"relation {ref.relation} has no field {ref.field}", pos)

    def resolve_condition(self, expr: ast.Expression, rule: ast.RuleDecl) -> ast.Expression:
        for node in ast.walk_expression(expr):
            if isinstance(node, ast.FieldRef):
                if node.relation not in self.relations:
                    self.fail(
                        f"rule {rule.name}: unknown relation {node.relation} in condition",
                        rule.pos,
                    )
                self.check_field(node, rule.pos)
            elif isinstance(node, ast.ScopeRef):
                self.fail(
                    f"rule {rule.name}: unknown name {node.name} in condition (rules have no scope)",
                    rule.pos,
                )
        root = expr
        statically_boolean = (
            isinstance(root, ast.Binary)
            and root.op in ast.COMPARISON_OPS + ast.BOOLEAN_OPS
            or isinstance(root, ast.Unary)
            and root.op == "NOT"
            or isinstance(root, ast.FieldRef)
        )
        if not statically_boolean:
            self.fail(f"rule {rule.name}: condition is not boolean-valued", rule.pos)
        return expr

    def resolve_block(self, block: ast.Block, pos: ast.Pos) -> ast.Block:
        return tuple(self.resolve_statement(s) for s in block)

    def resolve_statement(self, stmt: ast.Statement) -> ast.Statement:
        if isinstance(stmt, ast.Insert):
            decl = self.relations.get(stmt.relation)
            if decl is None:
                self.fail(f"insert into unknown relation {stmt.relation}", stmt.pos)
                raise AssertionError("unreachable")
            if len(stmt.args) != len(decl.fields):
                self.fail(
                    f"relation {stmt.relation} takes {len(decl.fields)} values, got {len(stmt.args)}",
                    stmt.pos,
                )
            args = tuple(self.resolve_arg(a, stmt.pos) for a in stmt.args)
            return ast.Insert(stmt.relation, args, stmt.pos)
        if isinstance(stmt, (ast.StartTimer, ast.StopTimer)):
            if stmt.name not in self.timers:
                self.fail(f"unknown timer {stmt.name}", stmt.pos)
            return stmt
        if isinstance(stmt, (ast.Activate, ast.Deactivate, ast.Check)):
            if stmt.rule not in self.rules:
                self.fail(f"unknown rule {stmt.rule}", stmt.pos)
            return stmt
        if isinstance(stmt, (ast.CallModule, ast.AcallModule)):
            if stmt.name not in self.modules:
                self.fail(f"unknown module {stmt.name}", stmt.pos)
            args = tuple(self.resolve_arg(a, stmt.pos) for a in stmt.args)
            ctor = ast.CallModule if isinstance(stmt, ast.CallModule) else ast.AcallModule
            return ctor(stmt.name, args, stmt.pos)
        raise AssertionError(f"unhandled statement {stmt!r}")


def parse_program(source: str) -> ast.Program:
    """Parse and validate source text into a Program."""
    parser = _Parser(tokenize(source))
    program = parser.parse_program()
    return _Resolver(program).run()


def parse_expression(source: str) -> ast.Expression:
    """Parse a standalone expression; dotted names become field references."""
    parser = _Parser(tokenize(source))
    expr = parser.parse_expression()
    trailing = parser.current()
    if trailing.kind is not TokenKind.EOF:
        raise ParseError(
            f"unexpected input after expression: {trailing.value!r}",
            trailing.line,
            trailing.column,
        )
    return expr
