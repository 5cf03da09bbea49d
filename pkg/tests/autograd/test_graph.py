import io

import numpy as np
import pytest

from dualstream import errors
from dualstream.autograd import (
    Graph,
    Tensor,
    backward,
    count_macs,
    dump_tensor,
    is_grad_enabled,
    matmul,
    no_grad,
)


def test_shared_subexpression_is_visited_once():
    x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    a = x * 2.0
    loss = (a + a + x * x).sum()
    graph = backward(loss)
    # d/dx (4x + x²) = 4 + 2x
    np.testing.assert_allclose(x.grad, 4.0 + 2.0 * x.data)
    assert len({id(t) for t in graph.nodes}) == len(graph.nodes)


def test_graph_order_puts_producers_first():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    y = Tensor(np.ones((2, 2)), requires_grad=True)
    h = matmul(x, y)
    loss = ((h * h) + h).sum()
    graph = Graph.from_output(loss)
    position = {id(t): i for i, t in enumerate(graph.nodes)}
    for tensor in graph.nodes:
        for parent in tensor._node.inputs:
            if id(parent) in position:
                assert position[id(parent)] < position[id(tensor)]
    assert graph.nodes[-1] is loss
    assert [id(t) for t in graph.leaves] == [id(x), id(y)]


def test_only_leaves_receive_gradients():
    x = Tensor(np.array([2.0, 3.0]), requires_grad=True)
    hidden = x * x
    hidden.sum().backward()
    assert hidden.grad is None
    np.testing.assert_allclose(x.grad, [4.0, 6.0])


def test_backward_accumulates_until_zeroed():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    (x * 3.0).sum().backward()
    (x * 3.0).sum().backward()
    np.testing.assert_allclose(x.grad, [6.0, 6.0])
    x.zero_grad()
    np.testing.assert_array_equal(x.grad, [0.0, 0.0])


def test_operator_overloads():
    a = Tensor(np.array([[1.0, 2.0]]), requires_grad=True)
    b = Tensor(np.array([[3.0], [4.0]]), requires_grad=True)
    out = (a @ b) - 1.0 + (-a).sum()
    assert out.item() == pytest.approx(11.0 - 1.0 - 3.0)
    out.backward()
    np.testing.assert_allclose(a.grad, [[3.0 - 1.0, 4.0 - 1.0]])
    np.testing.assert_allclose(b.grad, [[1.0], [2.0]])


def test_backward_rejects_non_scalar_and_non_finite():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(errors.ContractViolationError, match="scalar"):
        backward(x * 2.0)
    with pytest.raises(errors.NumericalError):
        backward(Tensor(np.array(np.nan), requires_grad=True))
    with pytest.raises(errors.ContractViolationError):
        backward(Tensor(np.array(1.0)))


def test_no_grad_records_nothing():
    x = Tensor(np.ones(2), requires_grad=True)
    with no_grad():
        assert not is_grad_enabled()
        y = (x * x).sum()
    assert is_grad_enabled()
    assert y.is_leaf and not y.requires_grad


def test_count_macs_sums_every_matmul():
    a = Tensor(np.ones((4, 2, 3)))
    b = Tensor(np.ones((3, 5)))
    with count_macs() as counter:
        matmul(a, b)
        matmul(a, b)
    assert counter.calls == 2
    assert counter.total == 2 * (4 * 2 * 3 * 5)
    # Outside the context nothing is counted.
    matmul(a, b)
    assert counter.calls == 2


def test_item_requires_single_element():
    with pytest.raises(errors.ContractViolationError):
        Tensor(np.ones(2)).item()


def test_dump_tensor_format():
    stream = io.StringIO()
    dump_tensor(Tensor(np.array([[0.1, 2.0], [-3.5, 0.25]])), stream)
    assert stream.getvalue() == (
        "shape: 2 2\n"
        "0.10000000000000001 2\n"
        "-3.5 0.25\n"
    )
