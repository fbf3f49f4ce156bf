"""Deploy-time execution-mode classifier.

The source of a function is parsed into an AST and walked once. Framework
imports, explicit device placement calls and tensor operations set four
detection flags, and a fixed decision hierarchy turns the flags into an
:class:`~gaia.modes.ExecutionMode` plus a canonical reason string.
"""
from __future__ import annotations

import ast
import json
import logging
import re
from dataclasses import dataclass, field
from math import prod
from typing import Iterable, Mapping, Optional, Sequence, Union

from gaia.modes import ExecutionMode

logger = logging.getLogger(__name__)

DEFAULT_FRAMEWORKS = frozenset({"torch", "tensorflow"})
DEFAULT_TENSOR_OPS = frozenset(
    {"matmul", "mm", "bmm", "conv1d", "conv2d", "conv3d", "einsum"}
)
DEFAULT_BIG_OP_THRESHOLD = 1_000_000

SHAPE_CONSTRUCTORS = frozenset({"rand", "zeros", "ones", "empty", "randn"})
# methods that return a tensor of the receiver's shape
SHAPE_PRESERVING = frozenset({"to", "cuda", "cpu", "float", "double", "half", "contiguous"})

REASON_EXPLICIT = "explicit GPU usage"
REASON_LARGE = "large tensor ops"
REASON_SMALL = "small tensor ops"
REASON_IMPORTS = "imports only"
REASON_NONE = "no GPU-related activity"
REASONS = (REASON_EXPLICIT, REASON_LARGE, REASON_SMALL, REASON_IMPORTS, REASON_NONE)

MATMUL_OPERATOR = "@"

_CUDA_DEVICE = re.compile(r"^cuda(:\d+)?$")
_TF_GPU_DEVICE = re.compile(r"^/(device:)?gpu(:\d+)?$", re.IGNORECASE)
_IDENTIFIER = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

# Node kinds the analyzer understands. Anything else is reported as an
# UnsupportedConstruct; its own semantics are ignored but the walk still
# descends into its children.
SUPPORTED_NODES = (
    ast.Module, ast.Import, ast.ImportFrom, ast.alias, ast.FunctionDef,
    ast.arguments, ast.arg, ast.Assign, ast.AnnAssign, ast.AugAssign,
    ast.Attribute, ast.Call, ast.keyword, ast.If, ast.IfExp, ast.For,
    ast.BinOp, ast.UnaryOp, ast.BoolOp, ast.Compare, ast.Return, ast.Expr,
    ast.Name, ast.Constant, ast.Tuple, ast.List, ast.Subscript, ast.Slice,
    ast.Pass, ast.expr_context, ast.operator, ast.unaryop, ast.boolop,
    ast.cmpop,
)


class UnsupportedConstruct(Exception):
    """A syntax node outside the analyzed subset. Callers skip it."""

    def __init__(self, construct: str, lineno: Optional[int] = None):
        self.construct = construct
        self.lineno = lineno
        where = f" at line {lineno}" if lineno is not None else ""
        super().__init__(f"unsupported construct {construct}{where}")


@dataclass(frozen=True)
class SourceUnit:
    function_name: str
    source_text: str

    def __post_init__(self):
        if not self.source_text:
            raise ValueError("source_text must be non-empty")
        if not _IDENTIFIER.match(self.function_name):
            raise ValueError(f"invalid function name {self.function_name!r}")


@dataclass(frozen=True)
class DetectionFlags:
    dl_import: bool = False
    gpu_explicit: bool = False
    big_ops: bool = False
    small_ops: bool = False

    def as_dict(self) -> dict:
        return {
            "dl_import": self.dl_import,
            "gpu_explicit": self.gpu_explicit,
            "big_ops": self.big_ops,
            "small_ops": self.small_ops,
        }


@dataclass(frozen=True)
class CensusEntry:
    """One tensor operation seen during the walk; ``elements`` is None when unknown."""

    kind: str
    elements: Optional[int]
    lineno: Optional[int] = None


@dataclass(frozen=True)
class AnalysisReport:
    mode: ExecutionMode
    reason: str
    flags: DetectionFlags
    op_census: tuple[CensusEntry, ...] = ()
    warning: Optional[str] = None

    def to_annotations(self) -> str:
        """Render as the ``gaia.*`` key=value block embedded in a manifest."""
        flags = ",".join(f"{k}={str(v).lower()}" for k, v in self.flags.as_dict().items())
        lines = [
            f"gaia.mode={self.mode.value}",
            f"gaia.reason={json.dumps(self.reason)}",
            f"gaia.flags={flags}",
        ]
        if self.warning:
            lines.append(f"gaia.warning={json.dumps(self.warning)}")
        return "\n".join(lines) + "\n"


def parse_annotations(text: str) -> AnalysisReport:
    values: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"malformed annotation line: {raw!r}")
        values[key.strip()] = value.strip()
    try:
        mode = ExecutionMode(values["gaia.mode"])
        reason = json.loads(values["gaia.reason"])
        flag_items = dict(item.split("=", 1) for item in values["gaia.flags"].split(","))
    except (KeyError, ValueError) as exc:
        raise ValueError(f"incomplete annotation block: {exc}") from exc
    flags = DetectionFlags(**{k: v == "true" for k, v in flag_items.items()})
    warning = json.loads(values["gaia.warning"]) if "gaia.warning" in values else None
    return AnalysisReport(mode, reason, flags, warning=warning)


@dataclass(frozen=True)
class AnalyzerConfig:
    frameworks: frozenset = DEFAULT_FRAMEWORKS
    tensor_ops: frozenset = DEFAULT_TENSOR_OPS
    big_op_threshold: int = DEFAULT_BIG_OP_THRESHOLD

    def __post_init__(self):
        if self.big_op_threshold <= 0:
            raise ValueError("big_op_threshold must be positive")


@dataclass
class SourceTree:
    module: ast.Module
    unsupported: list[UnsupportedConstruct] = field(default_factory=list)

    def imports(self) -> list[ast.AST]:
        return [n for n in ast.walk(self.module) if isinstance(n, (ast.Import, ast.ImportFrom))]

    def calls(self) -> list[ast.Call]:
        return [n for n in ast.walk(self.module) if isinstance(n, ast.Call)]


def parse_source(src: Union[SourceUnit, str]) -> SourceTree:
    """Parse source text. Raises SyntaxError (with lineno/offset) on malformed input."""
    text = src.source_text if isinstance(src, SourceUnit) else src
    module = ast.parse(text, mode="exec")
    unsupported = [
        UnsupportedConstruct(type(node).__name__, getattr(node, "lineno", None))
        for node in ast.walk(module)
        if not isinstance(node, SUPPORTED_NODES)
    ]
    return SourceTree(module, unsupported)


def attribute_path(node: ast.AST) -> list[str]:
    """Dotted path of a Name/Attribute chain; non-name bases become ``"*"``.

    For a call, the path of its callee is returned.
    """
    if isinstance(node, ast.Call):
        return attribute_path(node.func)
    if isinstance(node, ast.Name):
        return [node.id]
    if isinstance(node, ast.Attribute):
        return attribute_path(node.value) + [node.attr]
    return ["*"]


def _string_args(call: ast.Call, keyword_names: Iterable[str] = ()) -> list[str]:
    args = [a for a in call.args]
    args += [kw.value for kw in call.keywords if kw.arg in keyword_names]
    return [a.value for a in args if isinstance(a, ast.Constant) and isinstance(a.value, str)]


def _is_gpu_device_string(value: str) -> bool:
    return bool(_CUDA_DEVICE.match(value) or _TF_GPU_DEVICE.match(value))


def is_explicit_gpu_call(call: ast.Call) -> bool:
    path = attribute_path(call)
    last = path[-1]
    if last == "cuda" and len(path) > 1:
        return True
    if last == "to":
        return any(_is_gpu_device_string(s) for s in _string_args(call, ("device",)))
    if last == "device" and len(path) > 1:
        return any(_is_gpu_device_string(s) for s in _string_args(call, ("type", "device_name")))
    return False


def is_cuda_guard(test: ast.AST) -> bool:
    for node in ast.walk(test):
        if isinstance(node, (ast.Attribute, ast.Call)):
            path = attribute_path(node)
            if path[-2:] == ["cuda", "is_available"]:
                return True
    return False


def literal_shape(node: ast.AST) -> Optional[tuple[int, ...]]:
    """Shape of a constructor call with integer-literal dims, else None."""
    if not isinstance(node, ast.Call):
        return None
    if attribute_path(node)[-1] not in SHAPE_CONSTRUCTORS:
        return None
    dims: list[ast.AST] = list(node.args)
    for kw in node.keywords:
        if kw.arg == "size":
            dims.append(kw.value)
    if len(dims) == 1 and isinstance(dims[0], (ast.Tuple, ast.List)):
        dims = list(dims[0].elts)
    if not dims:
        return None
    out = []
    for d in dims:
        if not (isinstance(d, ast.Constant) and type(d.value) is int and d.value >= 0):
            return None
        out.append(d.value)
    return tuple(out)


def _operand_shape(node: ast.AST, bindings: Mapping[str, tuple]) -> Optional[tuple]:
    if isinstance(node, ast.Name):
        return bindings.get(node.id)
    shape = literal_shape(node)
    if shape is not None:
        return shape
    # a = torch.rand(8, 8).cuda()
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Attribute):
        if node.func.attr in SHAPE_PRESERVING:
            return _operand_shape(node.func.value, bindings)
    return None


def tensor_operands(call: ast.Call, variables: Iterable[str] = ()) -> list[ast.AST]:
    """Operand expressions of a recognised tensor op.

    String literals (einsum equations) are skipped. For method-style calls
    (``a.matmul(b)``) the receiver counts as an operand when it is a bound
    variable rather than a module alias.
    """
    operands = [
        a for a in call.args
        if not (isinstance(a, ast.Constant) and isinstance(a.value, str))
    ]
    if isinstance(call.func, ast.Attribute):
        receiver = call.func.value
        if isinstance(receiver, ast.Name) and receiver.id in set(variables):
            operands.insert(0, receiver)
    return operands


def estimate_tensor_elements(
    call_node: ast.AST, bindings: Mapping[str, tuple], variables: Iterable[str] = ()
) -> Optional[int]:
    """Largest operand element count, or None if any operand shape is unresolved."""
    if isinstance(call_node, ast.BinOp):
        operands = [call_node.left, call_node.right]
    else:
        operands = tensor_operands(call_node, variables)
    if not operands:
        return None
    shapes = [_operand_shape(op, bindings) for op in operands]
    if any(s is None for s in shapes):
        return None
    return max(prod(s) for s in shapes)


def _assigned_names(target: ast.AST) -> list[str]:
    return [n.id for n in ast.walk(target) if isinstance(n, ast.Name)]


class _Scope:
    """Single-assignment shape bindings for one function (or module) body."""

    def __init__(self, body: Sequence[ast.stmt], params: Iterable[str] = (), parent=None):
        self.parent = parent
        counts: dict[str, int] = {p: 1 for p in params}
        values: dict[str, ast.AST] = {}
        for node in _walk_scope(body):
            targets: list[ast.AST] = []
            value = None
            if isinstance(node, ast.Assign):
                targets, value = node.targets, node.value
            elif isinstance(node, ast.AnnAssign):
                targets, value = [node.target], node.value
            elif isinstance(node, (ast.AugAssign, ast.For)):
                targets = [node.target]
            elif isinstance(node, (ast.With, ast.AsyncWith)):
                targets = [i.optional_vars for i in node.items if i.optional_vars is not None]
            elif isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
                counts[node.name] = counts.get(node.name, 0) + 1
                continue
            for t in targets:
                for name in _assigned_names(t):
                    counts[name] = counts.get(name, 0) + 1
                if isinstance(t, ast.Name) and value is not None:
                    values[t.id] = value
        self.variables = set(counts)
        self._single = {n: values[n] for n, c in counts.items() if c == 1 and n in values}
        self._params = set(params)
        self._cache: dict[str, Optional[tuple]] = {}

    def all_variables(self) -> set[str]:
        names = set(self.variables)
        if self.parent is not None:
            names |= self.parent.all_variables()
        return names

    def shape_of(self, name: str, _seen: Optional[set] = None) -> Optional[tuple]:
        if name in self._cache:
            return self._cache[name]
        if name in self.variables:
            shape = None
            value = self._single.get(name)
            if value is not None:
                seen = (_seen or set()) | {name}
                if isinstance(value, ast.Name) and value.id not in seen:
                    shape = self.shape_of(value.id, seen)
                else:
                    shape = _operand_shape(value, {})
                    if shape is None and isinstance(value, ast.Call) and isinstance(value.func, ast.Attribute):
                        base = value.func.value
                        if value.func.attr in SHAPE_PRESERVING and isinstance(base, ast.Name) and base.id not in seen:
                            shape = self.shape_of(base.id, seen)
        elif self.parent is not None:
            shape = self.parent.shape_of(name, _seen)
        else:
            shape = None
        self._cache[name] = shape
        return shape

    def bindings(self) -> dict[str, tuple]:
        out = {}
        for name in self.all_variables():
            shape = self.shape_of(name)
            if shape is not None:
                out[name] = shape
        return out


def _walk_scope(body: Sequence[ast.stmt]):
    """Walk a body without descending into nested function or class scopes."""
    stack = list(reversed(body))
    while stack:
        node = stack.pop()
        yield node
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef, ast.Lambda)):
            continue
        stack.extend(reversed(list(ast.iter_child_nodes(node))))


class _FlagScanner(ast.NodeVisitor):
    def __init__(self, config: AnalyzerConfig, module: ast.Module):
        self.config = config
        self.dl_import = False
        self.gpu_explicit = False
        self.census: list[CensusEntry] = []
        self._guard_depth = 0
        self._scope = _Scope(module.body)
        self._bindings = self._scope.bindings()
        self._variables = self._scope.all_variables()

    def visit_Import(self, node: ast.Import):
        for alias in node.names:
            if alias.name.split(".")[0] in self.config.frameworks:
                self.dl_import = True

    def visit_ImportFrom(self, node: ast.ImportFrom):
        if node.level == 0 and node.module and node.module.split(".")[0] in self.config.frameworks:
            self.dl_import = True

    def visit_FunctionDef(self, node: ast.FunctionDef):
        args = node.args
        params = [a.arg for a in args.posonlyargs + args.args + args.kwonlyargs]
        params += [a.arg for a in (args.vararg, args.kwarg) if a is not None]
        saved = self._scope, self._bindings, self._variables
        self._scope = _Scope(node.body, params, parent=saved[0])
        self._bindings = self._scope.bindings()
        self._variables = self._scope.all_variables()
        for dec in node.decorator_list:
            self.visit(dec)
        for stmt in node.body:
            self.visit(stmt)
        self._scope, self._bindings, self._variables = saved

    visit_AsyncFunctionDef = visit_FunctionDef

    def visit_If(self, node: ast.If):
        self.visit(node.test)
        guarded = is_cuda_guard(node.test)
        self._guard_depth += guarded
        for stmt in node.body:
            self.visit(stmt)
        self._guard_depth -= guarded
        for stmt in node.orelse:
            self.visit(stmt)

    def visit_IfExp(self, node: ast.IfExp):
        self.visit(node.test)
        guarded = is_cuda_guard(node.test)
        self._guard_depth += guarded
        self.visit(node.body)
        self._guard_depth -= guarded
        self.visit(node.orelse)

    def visit_Call(self, node: ast.Call):
        if is_explicit_gpu_call(node):
            if self._guard_depth == 0:
                self.gpu_explicit = True
        elif attribute_path(node)[-1] in self.config.tensor_ops:
            count = estimate_tensor_elements(node, self._bindings, self._variables)
            self.census.append(CensusEntry(attribute_path(node)[-1], count, node.lineno))
        self.generic_visit(node)

    def visit_BinOp(self, node: ast.BinOp):
        if isinstance(node.op, ast.MatMult):
            names = [n for n in (node.left, node.right) if isinstance(n, ast.Name)]
            known = any(n.id in self._bindings for n in names)
            if known and len(names) == 2:
                count = estimate_tensor_elements(node, self._bindings)
                self.census.append(CensusEntry(MATMUL_OPERATOR, count, node.lineno))
        self.generic_visit(node)


def scan_flags(
    tree: SourceTree, config: Optional[AnalyzerConfig] = None
) -> tuple[DetectionFlags, list[CensusEntry]]:
    config = config or AnalyzerConfig()
    scanner = _FlagScanner(config, tree.module)
    scanner.visit(tree.module)
    threshold = config.big_op_threshold
    big = any(e.elements is not None and e.elements >= threshold for e in scanner.census)
    small = any(e.elements is None or e.elements < threshold for e in scanner.census)
    flags = DetectionFlags(
        dl_import=scanner.dl_import,
        gpu_explicit=scanner.gpu_explicit,
        big_ops=big,
        small_ops=small,
    )
    return flags, scanner.census


def classify(flags: DetectionFlags, op_census: Sequence[CensusEntry] = ()) -> AnalysisReport:
    if flags.gpu_explicit:
        mode, reason = ExecutionMode.GPU, REASON_EXPLICIT
    elif flags.dl_import and flags.big_ops:
        mode, reason = ExecutionMode.GPU_PREFERRED, REASON_LARGE
    elif flags.dl_import and flags.small_ops and not flags.big_ops:
        mode, reason = ExecutionMode.CPU_PREFERRED, REASON_SMALL
    elif flags.dl_import:
        mode, reason = ExecutionMode.CPU_PREFERRED, REASON_IMPORTS
    else:
        mode, reason = ExecutionMode.CPU, REASON_NONE
    return AnalysisReport(mode, reason, flags, tuple(op_census))


def analyze(
    src: Union[SourceUnit, str],
    config: Optional[AnalyzerConfig] = None,
    strict: bool = False,
) -> AnalysisReport:
    """Parse, scan and classify in one step.

    Unparsable input yields ``(cpu, "no GPU-related activity")`` with a
    warning attached, unless ``strict`` is set, in which case the
    SyntaxError propagates.
    """
    try:
        tree = parse_source(src)
    except SyntaxError as exc:
        if strict:
            raise
        msg = f"syntax error at line {exc.lineno}, column {exc.offset}: {exc.msg}"
        logger.warning("analysis skipped: %s", msg)
        return AnalysisReport(ExecutionMode.CPU, REASON_NONE, DetectionFlags(), warning=msg)
    for item in tree.unsupported:
        logger.debug("skipping %s", item)
    flags, census = scan_flags(tree, config)
    return classify(flags, census)
