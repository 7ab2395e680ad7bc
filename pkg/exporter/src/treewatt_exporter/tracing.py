"""Model-tree extraction from a live PyTorch module.

One traced forward pass drives everything: forward hooks on each module
record activation shapes (for FLOP and byte counts), a module stack
attributes patched functional ops (matmul/bmm/einsum/softmax) to the
module that invoked them, and the static ``named_children`` hierarchy
supplies the tree shape. Pure container modules (ModuleList/ModuleDict)
are collapsed; modules that never execute or end up childless are
pruned.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field

import torch
from torch import nn

# framework primitives recognized as ml leaves, by class name so that
# third-party classes (e.g. the HF transformer Conv1D) match without a
# hard dependency
PRIMITIVE_CLASSES = {
    "Linear", "LayerNorm", "Embedding", "BatchNorm1d", "Conv1d", "MaxPool1d",
    "AvgPool1d", "LSTM", "Tanh", "Conv1D", "LogSigmoid", "ReLU", "Sigmoid",
    "GELU", "LeakyReLU",
}
CUSTOM_PRIMITIVES = {"MatMul", "Softmax"}
_CONTAINER_CLASSES = (nn.ModuleList, nn.ModuleDict)


class ExportError(RuntimeError):
    pass


@dataclass
class TraceNode:
    type_name: str
    kind: str                     # "model" | "module" | "ml"
    primitive: str | None = None
    children: list["TraceNode"] = field(default_factory=list)
    flops: float = 0.0            # raw flop count (converted to millions later)
    mem_bytes: float = 0.0        # raw bytes (converted to MiB later)
    executed: bool = False
    name: str = ""


def _iter_tensors(obj):
    if isinstance(obj, torch.Tensor):
        yield obj
    elif isinstance(obj, (list, tuple)):
        for item in obj:
            yield from _iter_tensors(item)
    elif isinstance(obj, dict):
        for item in obj.values():
            yield from _iter_tensors(item)


def _numel(obj) -> int:
    return sum(t.numel() for t in _iter_tensors(obj))


def _leaf_flops(primitive: str, module: nn.Module, args, kwargs, output) -> float:
    out_numel = _numel(output)
    in_numel = _numel(args) + _numel(kwargs)
    if primitive == "Linear":
        return 2.0 * out_numel * module.in_features + out_numel
    if primitive == "Conv1D":  # HF style, weight is (in, out)
        return 2.0 * out_numel * module.weight.shape[0] + out_numel
    if primitive == "Conv1d":
        per_out = 2.0 * module.in_channels // module.groups * module.kernel_size[0]
        return out_numel * per_out
    if primitive == "Embedding":
        return float(out_numel)
    if primitive == "LayerNorm":
        return 8.0 * in_numel
    if primitive == "BatchNorm1d":
        return 4.0 * in_numel
    if primitive in ("MaxPool1d", "AvgPool1d"):
        k = module.kernel_size if isinstance(module.kernel_size, int) else module.kernel_size[0]
        return float(out_numel * k)
    if primitive == "LSTM":
        x = next(_iter_tensors(args), None)
        steps = x.shape[0] * x.shape[1] if x is not None and x.dim() >= 2 else 1
        h = module.hidden_size
        return 8.0 * steps * h * (module.input_size + h + 1) * module.num_layers
    # element-wise activations
    return float(out_numel)


def _functional_flops(op: str, args, kwargs, output) -> float:
    out_numel = _numel(output)
    if op == "MatMul":
        tensors = [t for t in _iter_tensors(args)]
        inner = tensors[0].shape[-1] if tensors and tensors[0].dim() >= 1 else 1
        return 2.0 * out_numel * inner
    # softmax: exp, sum, divide plus the max-subtraction pass
    return 5.0 * out_numel


def _bytes(module: nn.Module | None, args, kwargs, output) -> float:
    total = 0.0
    for t in _iter_tensors((args, kwargs, output)):
        total += t.numel() * t.element_size()
    if module is not None:
        total += sum(p.numel() * p.element_size() for p in module.parameters(recurse=False))
    return total


def _skeleton(module: nn.Module, is_root: bool) -> TraceNode | None:
    cls = type(module).__name__
    if cls in PRIMITIVE_CLASSES and not is_root:
        return TraceNode(type_name=cls, kind="ml", primitive=cls)
    node = TraceNode(type_name=cls, kind="model" if is_root else "module")
    for child in module.children():
        if isinstance(child, _CONTAINER_CLASSES):
            for sub in child.children():
                sub_node = _skeleton(sub, False)
                if sub_node is not None:
                    node.children.append(sub_node)
        else:
            child_node = _skeleton(child, False)
            if child_node is not None:
                node.children.append(child_node)
    return node


def _collect_hook_targets(module: nn.Module, node: TraceNode, out: list):
    out.append((module, node))
    it = iter(node.children)
    static_children = []
    for child in module.children():
        if isinstance(child, _CONTAINER_CLASSES):
            static_children.extend(c for c in child.children())
        else:
            static_children.append(child)
    for child_module, child_node in zip(static_children, node.children):
        _collect_hook_targets(child_module, child_node, out)


@contextlib.contextmanager
def _patched_functionals(record):
    """Temporarily wrap matmul-family and softmax entry points."""
    targets = [
        (torch, "matmul", "MatMul"),
        (torch, "bmm", "MatMul"),
        (torch, "einsum", "MatMul"),
        (torch, "softmax", "Softmax"),
        (torch.nn.functional, "softmax", "Softmax"),
    ]
    originals = [(owner, attr, getattr(owner, attr)) for owner, attr, _ in targets]

    def make_wrapper(orig, op_name):
        def wrapper(*args, **kwargs):
            out = orig(*args, **kwargs)
            record(op_name, args, kwargs, out)
            return out
        return wrapper

    for (owner, attr, op_name), (_, _, orig) in zip(targets, originals):
        setattr(owner, attr, make_wrapper(orig, op_name))
    try:
        yield
    finally:
        for owner, attr, orig in originals:
            setattr(owner, attr, orig)


def trace_model(model: nn.Module, args: tuple) -> TraceNode:
    """Run one forward pass and return the populated, pruned trace tree."""
    model.eval()
    root = _skeleton(model, True)
    targets: list[tuple[nn.Module, TraceNode]] = []
    _collect_hook_targets(model, root, targets)

    stack: list[TraceNode] = []
    handles = []

    def record_functional(op_name, f_args, f_kwargs, output):
        # attach to the innermost non-leaf module currently executing
        parent = next((n for n in reversed(stack) if n.kind != "ml"), root)
        leaf = TraceNode(type_name=op_name, kind="ml", primitive=op_name, executed=True)
        leaf.flops += _functional_flops(op_name, f_args, f_kwargs, output)
        leaf.mem_bytes += _bytes(None, f_args, f_kwargs, output)
        parent.children.append(leaf)

    def make_pre(node):
        def pre_hook(module, h_args, h_kwargs=None):
            stack.append(node)
        return pre_hook

    def make_post(node):
        def post_hook(module, h_args, h_kwargs, output=None):
            if output is None:  # positional-only signature
                h_kwargs, output = {}, h_kwargs
            node.executed = True
            if node.kind == "ml":
                node.flops += _leaf_flops(node.primitive, module, h_args, h_kwargs, output)
                node.mem_bytes += _bytes(module, h_args, h_kwargs, output)
            if stack and stack[-1] is node:
                stack.pop()
        return post_hook

    for module, node in targets:
        try:
            handles.append(module.register_forward_pre_hook(make_pre(node), with_kwargs=True))
            handles.append(module.register_forward_hook(make_post(node), with_kwargs=True))
        except TypeError:  # older torch without kwargs hooks
            handles.append(module.register_forward_pre_hook(make_pre(node)))
            handles.append(module.register_forward_hook(make_post(node)))

    try:
        with torch.no_grad(), _patched_functionals(record_functional):
            model(*args)
    except Exception as e:
        raise ExportError(f"trace failure while running the model: {e}") from e
    finally:
        for h in handles:
            h.remove()

    root = _prune(root)
    if root is None or not root.children:
        raise ExportError("model produced no traceable primitives")
    _accumulate(root)
    _assign_names(root)
    return root


def _prune(node: TraceNode) -> TraceNode | None:
    if node.kind == "ml":
        return node if node.executed else None
    node.children = [c for c in (_prune(c) for c in node.children) if c is not None]
    if not node.children or not node.executed:
        return None if node.kind != "model" else node
    return node


def _accumulate(node: TraceNode):
    if node.kind == "ml":
        return
    for c in node.children:
        _accumulate(c)
    node.flops = sum(c.flops for c in node.children)
    node.mem_bytes = sum(c.mem_bytes for c in node.children)


def _assign_names(root: TraceNode):
    counters: dict[str, int] = {}

    def rec(node: TraceNode):
        idx = counters.get(node.type_name, 0)
        counters[node.type_name] = idx + 1
        node.name = f"{node.type_name}:{idx}"
        for c in node.children:
            rec(c)

    rec(root)
