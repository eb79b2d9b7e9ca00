"""Execution-trace reconstruction and aggregation into call trees and
dependency graphs, rendered as DOT.

Reconstruction inverts the eoi/ess encoding. Synchronous mode replays the
records through a call stack and rejects traces that could not have come
from one control flow. Asynchronous mode infers parents from ess and time
containment instead, which handles overlapping (parallel) executions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .records import OperationExecutionRecord

ENTRY_LABEL = "'Entry'"


class InvalidSynchronousTrace(Exception):
    """A record sequence is not replayable through a synchronous call stack."""

    def __init__(self, eoi: int, reason: str):
        super().__init__(f"eoi {eoi}: {reason}")
        self.eoi = eoi
        self.reason = reason


@dataclass(slots=True)
class Execution:
    """One reconstructed execution; parent indexes into the trace's list."""

    record: OperationExecutionRecord
    parent: int | None


@dataclass(slots=True)
class ExecutionTrace:
    """Reconstructed execution forest of one Kieker trace id.

    Parent links always point backwards (parent.eoi < child.eoi) and one
    level up (parent.ess == child.ess - 1).
    """

    kieker_trace_id: int
    executions: list[Execution] = field(default_factory=list)

    def roots(self) -> list[int]:
        return [i for i, e in enumerate(self.executions) if e.parent is None]


def reconstruct_trace(
    records: list[OperationExecutionRecord], asynchronous: bool = False
) -> ExecutionTrace:
    """Rebuild the execution forest from eoi-sorted records of one trace.

    Synchronous mode maintains a stack: a record with ess=k pops back to
    depth k and becomes a child of the new stack top. Everything popped
    must already have ended, and each child must nest inside its parent's
    [tin, tout]; violations raise InvalidSynchronousTrace, the signal that
    the trace needs asynchronous handling.

    Asynchronous mode assigns as parent the latest-starting previously seen
    execution one stack level up whose interval contains the record's tin;
    records without such a candidate become roots.
    """
    if [r.eoi for r in records] != list(range(len(records))):
        raise ValueError("records must be sorted by eoi and cover 0..n-1 exactly")
    trace_id = records[0].trace_id if records else 0
    if asynchronous:
        executions = _link_by_containment(records)
    else:
        executions = _replay_stack(records)
    return ExecutionTrace(kieker_trace_id=trace_id, executions=executions)


def _replay_stack(records: list[OperationExecutionRecord]) -> list[Execution]:
    executions: list[Execution] = []
    stack: list[int] = []
    for index, record in enumerate(records):
        depth = record.ess
        if depth > len(stack):
            raise InvalidSynchronousTrace(
                record.eoi, f"ess gap: ess={depth} but stack depth is {len(stack)}"
            )
        while len(stack) > depth:
            popped = executions[stack.pop()].record
            if popped.tout > record.tin:
                raise InvalidSynchronousTrace(
                    record.eoi,
                    f"operation at eoi {popped.eoi} is still running at tin={record.tin} "
                    f"(ends at {popped.tout}); executions overlap",
                )
        parent = stack[-1] if stack else None
        if parent is not None:
            enclosing = executions[parent].record
            if record.tin < enclosing.tin or record.tout > enclosing.tout:
                raise InvalidSynchronousTrace(
                    record.eoi,
                    f"[{record.tin}, {record.tout}] not nested in parent "
                    f"[{enclosing.tin}, {enclosing.tout}]",
                )
        executions.append(Execution(record=record, parent=parent))
        stack.append(index)
    return executions


def _link_by_containment(records: list[OperationExecutionRecord]) -> list[Execution]:
    executions: list[Execution] = []
    for index, record in enumerate(records):
        parent: int | None = None
        if record.ess > 0:
            best_tin: int | None = None
            for j in range(index):
                candidate = executions[j].record
                if candidate.ess != record.ess - 1:
                    continue
                if not candidate.tin <= record.tin <= candidate.tout:
                    continue
                if best_tin is None or candidate.tin >= best_tin:
                    parent = j
                    best_tin = candidate.tin
        executions.append(Execution(record=record, parent=parent))
    return executions


@dataclass(eq=False)
class CallTreeNode:
    """Call-tree node; the weight counts executions merged into it."""

    label: str
    weight: int = 0
    children: dict[str, "CallTreeNode"] = field(default_factory=dict)


@dataclass(slots=True)
class AggregatedCallTree:
    """Executions of many traces merged under one synthetic entry node.

    Two executions land in the same node iff their full label paths from
    the entry node are equal (context-sensitive merge).
    """

    root: CallTreeNode
    trace_count: int = 0


@dataclass(slots=True)
class DependencyGraph:
    """Directed hostname graph; edge weights count parent->child calls."""

    nodes: set[str] = field(default_factory=lambda: {ENTRY_LABEL})
    edges: dict[tuple[str, str], int] = field(default_factory=dict)


def execution_label(record: OperationExecutionRecord) -> str:
    return f"{record.hostname}::{record.operation_signature}"


def build_call_tree(traces: list[ExecutionTrace]) -> AggregatedCallTree:
    """Merge execution forests into one call tree rooted at 'Entry'."""
    entry = CallTreeNode(label=ENTRY_LABEL)
    for trace in traces:
        node_of: list[CallTreeNode] = []
        for execution in trace.executions:
            parent_node = entry if execution.parent is None else node_of[execution.parent]
            label = execution_label(execution.record)
            child = parent_node.children.get(label)
            if child is None:
                child = CallTreeNode(label=label)
                parent_node.children[label] = child
            child.weight += 1
            node_of.append(child)
    return AggregatedCallTree(root=entry, trace_count=len(traces))


def build_dependency_graph(traces: list[ExecutionTrace]) -> DependencyGraph:
    """Count parent->child execution pairs between hostnames.

    Root executions contribute an edge from the synthetic 'Entry' node, so
    the total edge weight equals the total number of executions.
    """
    graph = DependencyGraph()
    for trace in traces:
        for execution in trace.executions:
            callee = execution.record.hostname
            if execution.parent is None:
                caller = ENTRY_LABEL
            else:
                caller = trace.executions[execution.parent].record.hostname
            graph.nodes.add(callee)
            key = (caller, callee)
            graph.edges[key] = graph.edges.get(key, 0) + 1
    return graph


def emit_dot(obj: AggregatedCallTree | DependencyGraph) -> str:
    """Render a call tree or dependency graph as deterministic DOT text.

    Node statements are sorted by node id, edges by (from, to). When two
    call-tree nodes share a label, later ones get a ``#k`` suffix on their
    id while keeping the displayed label.
    """
    if isinstance(obj, AggregatedCallTree):
        nodes, edges = _call_tree_elements(obj)
    elif isinstance(obj, DependencyGraph):
        nodes = [(name, name) for name in obj.nodes]
        edges = [(src, dst, weight) for (src, dst), weight in obj.edges.items()]
    else:
        raise TypeError(f"cannot render {type(obj).__name__} as DOT")
    lines = ["digraph G {"]
    for node_id, label in sorted(nodes):
        if label != node_id:
            lines.append(f"  {_quote(node_id)} [label={_quote(label)}];")
        else:
            lines.append(f"  {_quote(node_id)};")
    for src, dst, weight in sorted(edges):
        lines.append(f"  {_quote(src)} -> {_quote(dst)} [label={_quote(str(weight))}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _call_tree_elements(
    tree: AggregatedCallTree,
) -> tuple[list[tuple[str, str]], list[tuple[str, str, int]]]:
    used_ids: set[str] = set()
    nodes: list[tuple[str, str]] = []
    edges: list[tuple[str, str, int]] = []

    def visit(node: CallTreeNode) -> str:
        node_id = node.label
        suffix = 1
        while node_id in used_ids:
            suffix += 1
            node_id = f"{node.label} #{suffix}"
        used_ids.add(node_id)
        nodes.append((node_id, node.label))
        for label in sorted(node.children):
            child = node.children[label]
            child_id = visit(child)
            edges.append((node_id, child_id, child.weight))
        return node_id

    visit(tree.root)
    return nodes, edges


def _quote(text: str) -> str:
    escaped = text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
    return f'"{escaped}"'
