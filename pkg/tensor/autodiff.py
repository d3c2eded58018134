"""
Tape-based reverse-mode autodiff.

Ops executed inside a `Tape` context append an AutodiffNode per result.
Nodes are appended in creation order and only reference tensors that
already exist, so the tape is a topological order by construction and
cannot contain a cycle. Outside a tape ops run without recording, which is
the inference path.
"""

from contextvars import ContextVar
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from tensor.real import RealTensor
from utils.exceptions import GraphError
from utils.logger import get_logger

logger = get_logger(__name__)

# Backward rule: upstream gradient -> one gradient (or None) per input
BackwardRule = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

_active_tape: ContextVar[Optional["Tape"]] = ContextVar("labnn_active_tape", default=None)


@dataclass
class AutodiffNode:
    """One recorded op: its tag, inputs, output and backward rule."""

    index: int
    op: str
    inputs: Tuple[RealTensor, ...]
    output: RealTensor
    backward: BackwardRule


class Tape:
    """
    Recording context for one forward/backward pair.

    Each thread (and each asyncio task) sees its own active tape, so graphs
    built concurrently never share state.
    """

    def __init__(self):
        self.nodes: List[AutodiffNode] = []
        self._produced: Dict[int, int] = {}
        self._leaves: Dict[int, RealTensor] = {}
        self._token = None
        self._consumed = False

    def __enter__(self) -> "Tape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _active_tape.reset(self._token)
        self._token = None
        return False

    @property
    def leaves(self) -> List[RealTensor]:
        return list(self._leaves.values())

    def record(self, op: str, inputs: Sequence[RealTensor], output: RealTensor, backward: BackwardRule) -> None:
        for tensor in inputs:
            if tensor.requires_grad and id(tensor) not in self._produced:
                self._leaves.setdefault(id(tensor), tensor)
        node = AutodiffNode(len(self.nodes), op, tuple(inputs), output, backward)
        self._produced[id(output)] = node.index
        self.nodes.append(node)

    def backward(self, loss: RealTensor) -> List[RealTensor]:
        return backward(self, loss)


def current_tape() -> Optional[Tape]:
    return _active_tape.get()


def record(op: str, inputs: Sequence[RealTensor], out: np.ndarray, backward_rule: BackwardRule) -> RealTensor:
    """
    Wrap an op result and record it on the active tape when any input needs a gradient.
    """
    needs_grad = any(t.requires_grad for t in inputs)
    output = RealTensor.wrap(out, requires_grad=needs_grad)
    tape = current_tape()
    if needs_grad and tape is not None:
        tape.record(op, inputs, output, backward_rule)
    return output


def backward(tape: Tape, loss: RealTensor) -> List[RealTensor]:
    """
    Accumulate d(loss)/d(leaf) into every leaf's `grad`.

    Every leaf that fed the tape receives a gradient array, zero when it has
    no path to the loss.

    Args:
        tape (Tape): The tape the loss was computed on.
        loss (RealTensor): Scalar loss node.

    Returns:
        List[RealTensor]: The leaves, in first-use order.

    Raises:
        GraphError: If the loss is not scalar, was not produced on this tape,
            or the tape was already consumed.
    """
    if loss.data.size != 1:
        raise GraphError(f"Loss must be scalar, got shape {loss.data.shape}")
    if tape._consumed:
        raise GraphError("Backward already ran on this tape")
    if id(loss) not in tape._produced:
        raise GraphError("Loss was not produced on this tape")
    tape._consumed = True

    for leaf in tape.leaves:
        leaf.grad = np.zeros_like(leaf.data)

    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    last = tape._produced[id(loss)]
    for node in reversed(tape.nodes[: last + 1]):
        upstream = grads.pop(id(node.output), None)
        if upstream is None:
            continue
        input_grads = node.backward(upstream)
        for tensor, grad in zip(node.inputs, input_grads):
            if grad is None or not tensor.requires_grad:
                continue
            if id(tensor) in tape._leaves:
                tensor.grad = tensor.grad + grad.reshape(tensor.data.shape)
            else:
                key = id(tensor)
                grads[key] = grads[key] + grad if key in grads else grad
    logger.debug(f"Backward over {last + 1} nodes, {len(tape._leaves)} leaves")
    return tape.leaves
