"""Running fenced code blocks: bash lines go to the gateway, python goes to a structural interpreter.

Python blocks are never executed by CPython. They are parsed with :mod:`ast` and
only a tiny, closed subset is interpreted: imports of whitelisted tool names,
literal assignments, tool calls and ``print``. Anything else is rejected before
any statement runs.
"""
from __future__ import annotations

import ast
import re
from dataclasses import dataclass
from typing import Callable, Optional

from acvbench.errors import AcvError, ForbiddenConstruct, PlaceholderDetected
from acvbench.ops.commands import PLACEHOLDER
from acvbench.ops.gateway import ActionResult, Gateway

BASH_TAGS = {"bash", "sh", "shell", "console"}
PYTHON_TAGS = {"python", "py", "python3"}
_FENCE = re.compile(r"```[ \t]*([A-Za-z0-9_+-]*)[ \t]*\n(.*?)```", re.DOTALL)


@dataclass(frozen=True)
class CodeBlock:
    lang: str
    code: str


def extract_blocks(text: str) -> list[CodeBlock]:
    return [CodeBlock(m.group(1).lower(), m.group(2)) for m in _FENCE.finditer(text)]


def split_bash(code: str) -> list[str]:
    """Split into commands at unquoted separators; comments and blank lines are dropped."""
    code = code.replace("\\\n", " ")
    out: list[str] = []
    buf: list[str] = []
    quote: Optional[str] = None
    i = 0

    def flush():
        line = "".join(buf).strip()
        buf.clear()
        if line and not line.startswith("#"):
            out.append(line)

    while i < len(code):
        ch = code[i]
        if quote:
            buf.append(ch)
            if ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
            buf.append(ch)
        elif ch == "#" and (not buf or buf[-1].isspace()):
            while i < len(code) and code[i] != "\n":
                i += 1
            flush()
        elif ch in ";\n":
            flush()
        elif code.startswith("&&", i):
            flush()
            i += 1
        else:
            buf.append(ch)
        i += 1
    flush()
    return out


def run_bash(code: str, gateway: Gateway) -> list[ActionResult]:
    results = []
    for line in split_bash(code):
        res = gateway.run_line(line)
        results.append(res)
        if not res.ok:
            break
    return results


# -- python subset ----------------------------------------------------------------

_ALLOWED_BUILTINS = {"print"}


class _Checker(ast.NodeVisitor):
    def __init__(self, tools: set[str]):
        self.tools = tools
        self.bound: set[str] = set()

    def fail(self, node, what: str):
        raise ForbiddenConstruct(f"line {getattr(node, 'lineno', '?')}: {what} is not allowed")

    def check(self, tree: ast.Module) -> None:
        for stmt in tree.body:
            if isinstance(stmt, ast.ImportFrom):
                for alias in stmt.names:
                    if alias.name not in self.tools:
                        self.fail(stmt, f"importing {alias.name!r}")
                    self.bound.add(alias.asname or alias.name)
            elif isinstance(stmt, ast.Assign):
                for target in stmt.targets:
                    self._target(target)
                self._expr(stmt.value)
            elif isinstance(stmt, ast.Expr):
                if not isinstance(stmt.value, (ast.Call, ast.Constant)):
                    self.fail(stmt, "a bare expression")
                self._expr(stmt.value)
            elif isinstance(stmt, ast.Pass):
                continue
            elif isinstance(stmt, ast.Import):
                self.fail(stmt, "'import' of modules")
            else:
                self.fail(stmt, f"'{type(stmt).__name__}' statement")

    def _target(self, node) -> None:
        if isinstance(node, ast.Name):
            return
        if isinstance(node, (ast.Tuple, ast.List)):
            for elt in node.elts:
                self._target(elt)
            return
        self.fail(node, "assignment to anything but plain names")

    def _expr(self, node) -> None:
        if isinstance(node, ast.Constant):
            return
        if isinstance(node, ast.Name):
            return
        if isinstance(node, (ast.List, ast.Tuple, ast.Set)):
            for elt in node.elts:
                self._expr(elt)
            return
        if isinstance(node, ast.Dict):
            for k in node.keys:
                if k is None:
                    self.fail(node, "dict unpacking")
                self._expr(k)
            for v in node.values:
                self._expr(v)
            return
        if isinstance(node, ast.JoinedStr):
            for part in node.values:
                self._expr(part)
            return
        if isinstance(node, ast.FormattedValue):
            self._expr(node.value)
            if node.format_spec is not None:
                self._expr(node.format_spec)
            return
        if isinstance(node, ast.BinOp) and isinstance(node.op, ast.Add):
            self._expr(node.left)
            self._expr(node.right)
            return
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            self._expr(node.operand)
            return
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name):
                self.fail(node, "calling attributes or expressions")
            fname = node.func.id
            if fname not in _ALLOWED_BUILTINS and fname not in self.bound:
                if fname in self.tools:
                    self.fail(node, f"calling {fname!r} without importing it")
                self.fail(node, f"calling {fname!r}")
            for arg in node.args:
                if isinstance(arg, ast.Starred):
                    self.fail(arg, "star arguments")
                self._expr(arg)
            for kw in node.keywords:
                if kw.arg is None:
                    self.fail(kw, "keyword unpacking")
                self._expr(kw.value)
            return
        self.fail(node, f"expression '{type(node).__name__}'")


class _Runtime:
    def __init__(self, tools: dict[str, Callable]):
        self.tools = tools
        self.env: dict = {}
        self.out: list[str] = []

    def run(self, tree: ast.Module) -> None:
        for stmt in tree.body:
            if isinstance(stmt, ast.ImportFrom):
                for alias in stmt.names:
                    self.env[alias.asname or alias.name] = self.tools[alias.name]
            elif isinstance(stmt, ast.Assign):
                value = self.eval(stmt.value)
                for target in stmt.targets:
                    self.assign(target, value)
            elif isinstance(stmt, ast.Expr):
                self.eval(stmt.value)

    def assign(self, target, value) -> None:
        if isinstance(target, ast.Name):
            self.env[target.id] = value
            return
        values = list(value)
        if len(values) != len(target.elts):
            raise ValueError(f"expected {len(target.elts)} values to unpack, got {len(values)}")
        for t, v in zip(target.elts, values):
            self.assign(t, v)

    def eval(self, node):
        if isinstance(node, ast.Constant):
            return node.value
        if isinstance(node, ast.Name):
            if node.id not in self.env:
                raise NameError(f"name '{node.id}' is not defined")
            return self.env[node.id]
        if isinstance(node, ast.List):
            return [self.eval(e) for e in node.elts]
        if isinstance(node, ast.Tuple):
            return tuple(self.eval(e) for e in node.elts)
        if isinstance(node, ast.Set):
            return {self.eval(e) for e in node.elts}
        if isinstance(node, ast.Dict):
            return {self.eval(k): self.eval(v) for k, v in zip(node.keys, node.values)}
        if isinstance(node, ast.JoinedStr):
            return "".join(str(self.eval(v)) for v in node.values)
        if isinstance(node, ast.FormattedValue):
            value = self.eval(node.value)
            spec = self.eval(node.format_spec) if node.format_spec is not None else ""
            if node.conversion == ord("r"):
                value = repr(value)
            elif node.conversion == ord("s"):
                value = str(value)
            return format(value, spec)
        if isinstance(node, ast.BinOp):
            return self.eval(node.left) + self.eval(node.right)
        if isinstance(node, ast.UnaryOp):
            return -self.eval(node.operand)
        if isinstance(node, ast.Call):
            args = [self.eval(a) for a in node.args]
            kwargs = {kw.arg: self.eval(kw.value) for kw in node.keywords}
            if node.func.id == "print" and "print" not in self.env:
                sep = kwargs.pop("sep", " ")
                end = kwargs.pop("end", "\n")
                self.out.append(sep.join(str(a) for a in args) + end)
                return None
            func = self.env.get(node.func.id)
            if func is None:
                raise NameError(f"name '{node.func.id}' is not defined")
            return func(*args, **kwargs)
        raise ForbiddenConstruct(f"expression '{type(node).__name__}' is not allowed")


def run_python(code: str, tools: dict[str, Callable]) -> ActionResult:
    """Interpret a python block; ``tools`` maps whitelisted names to callables."""
    if PLACEHOLDER.search(code):
        return ActionResult.failure(f"{PlaceholderDetected.__name__}: placeholder left in code: "
                                    f"{PLACEHOLDER.search(code).group()}")
    try:
        tree = ast.parse(code)
    except SyntaxError as exc:
        return ActionResult.failure(f"SyntaxError: {exc.msg} (line {exc.lineno})")
    try:
        _Checker(set(tools)).check(tree)
    except ForbiddenConstruct as exc:
        return ActionResult.failure(f"{ForbiddenConstruct.__name__}: {exc}")
    rt = _Runtime(tools)
    try:
        rt.run(tree)
    except AcvError as exc:
        return ActionResult.failure(f"{type(exc).__name__}: {exc}", stdout="".join(rt.out).rstrip("\n"))
    except (NameError, TypeError, ValueError, KeyError) as exc:
        return ActionResult.failure(f"{type(exc).__name__}: {exc}", stdout="".join(rt.out).rstrip("\n"))
    return ActionResult.success("".join(rt.out).rstrip("\n"))


def execute_script(block: CodeBlock, gateway: Gateway, tools: dict[str, Callable]) -> list[ActionResult]:
    if block.lang in BASH_TAGS:
        return run_bash(block.code, gateway)
    if block.lang in PYTHON_TAGS:
        return [run_python(block.code, tools)]
    shown = block.lang or "untagged"
    return [ActionResult.failure(f"unknown language {shown}; only python and bash blocks are executed")]


def format_results(results: list[ActionResult]) -> str:
    """Executor feedback as the policy sees it."""
    ok = all(r.ok for r in results)
    body = "\n".join(t for t in (r.text() for r in results) if t)
    head = "exitcode: 0 (execution succeeded)" if ok else "exitcode: 1 (execution failed)"
    return f"{head}\nCode output:\n{body}".rstrip("\n") if body else f"{head}\nCode output:"
