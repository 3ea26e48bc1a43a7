"""
Dense reverse-mode differentiation over numpy float64 arrays.

Every primitive returns a new Tensor and, while recording is enabled and
any input requires a gradient, remembers its inputs together with a
closure mapping the output gradient to input gradients. `backward` walks
that record in reverse topological order.

Elementwise primitives follow numpy broadcasting over leading axes and
sum gradients back to each operand's shape. Vector primitives (dot,
matvec, softmax, cosine, concat) act on the last axis.
"""
import struct
from contextvars import ContextVar

import numpy as np

from .errors import ContractError, InputError, NumericError

FORMAT_VERSION = 1

_grad_enabled = ContextVar("timelyrec_grad_enabled", default=True)


class no_grad:
    """Context manager disabling graph recording in the current thread or task"""

    def __enter__(self):
        self.token = _grad_enabled.set(False)

    def __exit__(self, exc_type, exc_value, traceback):
        _grad_enabled.reset(self.token)


def grad_enabled():
    return _grad_enabled.get()


class Tensor:
    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self._parents = ()
        self._backward = None
        self._op = None

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        label = self.name or self._op or "const"
        return f"Tensor({label}, shape={self.shape})"


def constant(data):
    """Wrap data in a Tensor that never receives a gradient"""
    return data if isinstance(data, Tensor) else Tensor(data)


def _record(data, op, parents, backward):
    if not np.all(np.isfinite(data)):
        raise NumericError(f"{op} produced a non-finite value")
    out = Tensor(data)
    out._op = op
    if _grad_enabled.get() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(grad, shape):
    """Sum grad over the axes numpy broadcast to reach it from shape"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ContractError(f"{op}: shapes {a.shape} and {b.shape} do not match")


def add(a, b):
    a, b = constant(a), constant(b)
    _broadcast_shape(a, b, "add")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(a.data + b.data, "add", (a, b), backward)


def sub(a, b):
    a, b = constant(a), constant(b)
    _broadcast_shape(a, b, "sub")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record(a.data - b.data, "sub", (a, b), backward)


def scale(a, s):
    """Multiply a by a python number or by a single-element Tensor"""
    if not isinstance(s, Tensor):
        factor = float(s)
        return _record(a.data * factor, "scale", (a,), lambda g: (g * factor,))
    if s.data.size != 1:
        raise ContractError(f"scale: factor must hold one value, got shape {s.shape}")
    factor = s.data.reshape(())

    def backward(g):
        return g * factor, np.sum(g * a.data).reshape(s.shape)

    return _record(a.data * factor, "scale", (a, s), backward)


def hadamard(a, b):
    a, b = constant(a), constant(b)
    _broadcast_shape(a, b, "hadamard")

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record(a.data * b.data, "hadamard", (a, b), backward)


def dot(a, b):
    """Dot product over the last axis"""
    a, b = constant(a), constant(b)
    if a.shape[-1:] != b.shape[-1:]:
        raise ContractError(f"dot: shapes {a.shape} and {b.shape} do not match")
    _broadcast_shape(a, b, "dot")

    def backward(g):
        g = g[..., None]
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record(np.sum(a.data * b.data, axis=-1), "dot", (a, b), backward)


def matvec(m, v):
    """Apply matrix m (out, in) to the last axis of v (..., in)"""
    m, v = constant(m), constant(v)
    if m.data.ndim != 2 or v.shape[-1:] != m.shape[1:]:
        raise ContractError(f"matvec: shapes {m.shape} and {v.shape} do not match")

    def backward(g):
        flat_g = g.reshape(-1, m.shape[0])
        flat_v = v.data.reshape(-1, m.shape[1])
        return flat_g.T @ flat_v, g @ m.data

    return _record(v.data @ m.data.T, "matvec", (m, v), backward)


def concat(tensors, axis=-1):
    tensors = tuple(constant(t) for t in tensors)
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise ContractError(f"concat: incompatible shapes {shapes}")
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _record(data, "concat", tensors, backward)


def stack(tensors, axis=-1):
    """Stack same-shaped tensors along a new axis"""
    tensors = tuple(constant(t) for t in tensors)
    try:
        data = np.stack([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise ContractError(f"stack: incompatible shapes {shapes}")

    def backward(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _record(data, "stack", tensors, backward)


def reshape(a, shape):
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ContractError(f"reshape: cannot view {a.shape} as {shape}")
    return _record(data, "reshape", (a,), lambda g: (g.reshape(a.shape),))


def gather(table, index):
    """Rows of table at integer index (any shape); gradients land on those rows only"""
    index = np.asarray(index, dtype=np.int64)
    rows = table.shape[0]
    if index.size and (index.min() < 0 or index.max() >= rows):
        raise ContractError(f"gather: index out of range for table of {rows} rows")

    def backward(g):
        grad = np.zeros_like(table.data)
        np.add.at(grad, index, g)
        return (grad,)

    return _record(table.data[index], "gather", (table,), backward)


def softmax(a):
    """Softmax over the last axis, shifted by the max for stability"""
    shifted = np.exp(a.data - a.data.max(axis=-1, keepdims=True))
    s = shifted / shifted.sum(axis=-1, keepdims=True)

    def backward(g):
        return (s * (g - np.sum(g * s, axis=-1, keepdims=True)),)

    return _record(s, "softmax", (a,), backward)


def sigmoid(a):
    s = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _record(s, "sigmoid", (a,), lambda g: (g * s * (1.0 - s),))


def relu(a):
    mask = a.data > 0
    return _record(np.where(mask, a.data, 0.0), "relu", (a,), lambda g: (g * mask,))


def log(a):
    if np.any(a.data <= 0):
        raise NumericError("log of a non-positive value")
    return _record(np.log(a.data), "log", (a,), lambda g: (g / a.data,))


def clip(a, low, high):
    """Clamp values into [low, high]; clamped entries pass no gradient"""
    inside = (a.data >= low) & (a.data <= high)
    data = np.clip(a.data, low, high)
    return _record(data, "clip", (a,), lambda g: (g * inside,))


def mean(tensors):
    """Elementwise mean of same-shaped tensors"""
    tensors = tuple(constant(t) for t in tensors)
    if not tensors:
        raise ContractError("mean of an empty list")
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise ContractError(f"mean: shapes {sorted(shapes)} do not match")
    n = len(tensors)
    data = sum(t.data for t in tensors) / n
    return _record(data, "mean", tensors, lambda g: tuple(g / n for _ in range(n)))


def reduce_sum(a, axis=None):
    data = np.sum(a.data, axis=axis)

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _record(data, "reduce_sum", (a,), backward)


def cosine(a, b):
    """Cosine similarity over the last axis; zero vectors are a numeric error"""
    a, b = constant(a), constant(b)
    if a.shape[-1:] != b.shape[-1:]:
        raise ContractError(f"cosine: shapes {a.shape} and {b.shape} do not match")
    _broadcast_shape(a, b, "cosine")
    na = np.linalg.norm(a.data, axis=-1, keepdims=True)
    nb = np.linalg.norm(b.data, axis=-1, keepdims=True)
    if np.any(na == 0) or np.any(nb == 0):
        raise NumericError("cosine similarity of a zero vector")
    cos = np.sum(a.data * b.data, axis=-1, keepdims=True) / (na * nb)

    def backward(g):
        g = g[..., None]
        ga = g * (b.data / (na * nb) - cos * a.data / na**2)
        gb = g * (a.data / (na * nb) - cos * b.data / nb**2)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _record(cos[..., 0], "cosine", (a, b), backward)


def weighted_sum(weights, vectors):
    """Combine vectors (..., k, d) with weights (..., k) into (..., d)"""
    weights, vectors = constant(weights), constant(vectors)
    if vectors.shape[:-1] != weights.shape:
        raise ContractError(
            f"weighted_sum: weights {weights.shape} do not match vectors {vectors.shape}"
        )
    data = np.einsum("...k,...kd->...d", weights.data, vectors.data)

    def backward(g):
        gw = np.einsum("...d,...kd->...k", g, vectors.data)
        gv = weights.data[..., None] * g[..., None, :]
        return gw, gv

    return _record(data, "weighted_sum", (weights, vectors), backward)


def masked_fill(a, mask, value):
    """Replace entries where mask is set by a constant; those entries pass no gradient"""
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)
    data = np.where(mask, value, a.data)
    return _record(data, "masked_fill", (a,), lambda g: (np.where(mask, 0.0, g),))


def dropout(v, p, training, rng):
    """Inverted dropout: zero entries with probability p, scale survivors by 1/(1-p)"""
    if not 0 <= p < 1:
        raise ContractError(f"dropout rate must lie in [0, 1), got {p}")
    if not training or p == 0:
        return v
    keep = (rng.random(v.shape) >= p) / (1.0 - p)
    return _record(v.data * keep, "dropout", (v,), lambda g: (g * keep,))


def _topological_order(output):
    """Nodes reachable from output, every node after all of its parents"""
    order = []
    visited = set()
    stack = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._parents):
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(output):
    """
    Gradients of a scalar output with respect to every leaf that requires one.

    Returns a dict mapping leaf Tensor -> gradient array. A leaf used k
    times receives the sum of its k path contributions.
    """
    if output.data.size != 1:
        raise ContractError(f"backward needs a scalar output, got shape {output.shape}")
    if output._backward is None:
        raise ContractError("backward called without a recorded forward pass")

    grads = {id(output): np.ones_like(output.data)}
    leaves = {}
    for node in reversed(_topological_order(output)):
        grad = grads.pop(id(node), None)
        if grad is None:
            continue
        if node._backward is None:
            leaves[node] = grad
            continue
        for parent, parent_grad in zip(node._parents, node._backward(grad)):
            if not parent.requires_grad:
                continue
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + parent_grad
            else:
                grads[id(parent)] = parent_grad
    for leaf, grad in leaves.items():
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"gradient of {leaf.name or 'leaf'} is not finite")
    return leaves


def init_uniform(rng, shape, dim):
    """Uniform values in [-1/sqrt(dim), 1/sqrt(dim)]"""
    bound = 1.0 / np.sqrt(dim)
    return rng.uniform(-bound, bound, size=shape)


class ParamStore:
    """Named trainable tensors plus the Adam state kept for each of them"""

    def __init__(self):
        self.params = {}
        self.first_moment = {}
        self.second_moment = {}
        self.step = 0

    def add(self, name, value):
        if name in self.params:
            raise ContractError(f"Parameter {name} already exists")
        tensor = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self.params[name] = tensor
        self.first_moment[name] = np.zeros_like(tensor.data)
        self.second_moment[name] = np.zeros_like(tensor.data)
        return tensor

    def __getitem__(self, name):
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    def collect(self, gradients):
        """Map backward()'s leaf -> gradient dict to parameter names"""
        return {
            name: gradients[tensor]
            for name, tensor in self.params.items()
            if tensor in gradients
        }

    def snapshot(self):
        """Copies of every parameter value, keyed by name"""
        return {name: tensor.data.copy() for name, tensor in self.params.items()}

    def load(self, arrays):
        """Overwrite parameter values in place from a name -> array mapping"""
        missing = set(self.params) - set(arrays)
        if missing:
            raise InputError(f"Missing parameters: {', '.join(sorted(missing))}")
        for name, tensor in self.params.items():
            value = np.asarray(arrays[name], dtype=np.float64)
            if value.shape != tensor.shape:
                raise InputError(
                    f"Parameter {name} has shape {value.shape}, expected {tensor.shape}"
                )
            tensor.data[...] = value


def adam_step(store, gradients, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """
    One bias-corrected Adam update of every parameter in store, in place.

    gradients maps parameter names to arrays; parameters without an entry
    are treated as having a zero gradient.
    """
    for name, grad in gradients.items():
        if name not in store:
            raise ContractError(f"Gradient for unknown parameter {name}")
        if np.shape(grad) != store[name].shape:
            raise ContractError(
                f"Gradient for {name} has shape {np.shape(grad)}, expected {store[name].shape}"
            )
    store.step += 1
    correction1 = 1.0 - beta1**store.step
    correction2 = 1.0 - beta2**store.step
    for name, tensor in store.params.items():
        grad = gradients.get(name)
        if grad is None:
            grad = np.zeros_like(tensor.data)
        m = store.first_moment[name]
        v = store.second_moment[name]
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        tensor.data -= lr * (m / correction1) / (np.sqrt(v / correction2) + eps)


def grad_check_details(closure, params, h=1e-5, seed=0, gradients=None):
    """
    Compare analytic gradients against central differences.

    closure(rng) must build and return the scalar loss; it is called with
    a fresh Generator seeded by seed every time, so any randomness inside
    is frozen. params maps names to the Tensors to check. gradients, if
    given, replaces the analytic gradients (name -> array).

    Returns a dict name -> max relative error over that tensor's entries.
    """
    if gradients is None:
        leaf_grads = backward(closure(np.random.default_rng(seed)))
        gradients = {
            name: leaf_grads.get(tensor, np.zeros_like(tensor.data))
            for name, tensor in params.items()
        }

    errors = {}
    for name, tensor in params.items():
        analytic = gradients[name]
        worst = 0.0
        for index in np.ndindex(tensor.shape):
            original = tensor.data[index]
            tensor.data[index] = original + h
            plus = closure(np.random.default_rng(seed)).item()
            tensor.data[index] = original - h
            minus = closure(np.random.default_rng(seed)).item()
            tensor.data[index] = original
            numeric = (plus - minus) / (2 * h)
            a = float(analytic[index])
            error = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
            worst = max(worst, error)
        errors[name] = worst
    return errors


def grad_check(closure, params, h=1e-5, seed=0, gradients=None):
    """Max relative error between analytic and finite-difference gradients"""
    errors = grad_check_details(closure, params, h, seed, gradients)
    return max(errors.values(), default=0.0)


def save_params(path, arrays, header=b""):
    """
    Write name -> array to path.

    Layout: format version byte, uint32 header length, header bytes,
    uint32 tensor count, then per tensor a uint16 name length, the UTF-8
    name, a uint8 rank, uint32 dims and little-endian float64 values.
    """
    with open(path, "wb") as f:
        f.write(struct.pack("<B", FORMAT_VERSION))
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.write(struct.pack("<I", len(arrays)))
        for name, value in arrays.items():
            # asarray keeps 0-d scalars 0-d; tobytes writes C order
            value = np.asarray(value, dtype="<f8")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", value.ndim))
            f.write(struct.pack(f"<{value.ndim}I", *value.shape))
            f.write(value.tobytes())


def load_params(path):
    """Read a file written by save_params, returning (header bytes, name -> array)"""
    with open(path, "rb") as f:
        blob = f.read()
    try:
        (version,) = struct.unpack_from("<B", blob, 0)
        if version != FORMAT_VERSION:
            raise InputError(f"{path}: unsupported parameter format version {version}")
        (header_len,) = struct.unpack_from("<I", blob, 1)
        offset = 5
        header = blob[offset : offset + header_len]
        offset += header_len
        (count,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        arrays = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            shape = struct.unpack_from(f"<{ndim}I", blob, offset)
            offset += 4 * ndim
            size = int(np.prod(shape, dtype=np.int64))
            values = np.frombuffer(blob, dtype="<f8", count=size, offset=offset)
            offset += 8 * size
            arrays[name] = values.reshape(shape).astype(np.float64)
    except InputError:
        raise
    except (struct.error, ValueError):
        raise InputError(f"{path}: truncated parameter file")
    return header, arrays
